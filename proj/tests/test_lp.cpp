#include "voltmesh/lp.hpp"

#include <cmath>
#include <functional>
#include <vector>

#include "test_util.hpp"

using namespace voltmesh;

namespace {

LinearProgram make_lp(bool maximize, const std::vector<double>& c,
                      const std::vector<std::vector<double>>& rows,
                      const std::vector<RowSense>& senses, const std::vector<double>& b,
                      const std::vector<double>& lb, const std::vector<double>& ub) {
    LinearProgram lp;
    lp.maximize = maximize;
    int n = static_cast<int>(c.size());
    int m = static_cast<int>(b.size());
    lp.c = Eigen::Map<const Eigen::VectorXd>(c.data(), n);
    lp.a = Eigen::MatrixXd::Zero(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) lp.a(i, j) = rows[i][j];
    lp.senses = senses;
    lp.b = Eigen::Map<const Eigen::VectorXd>(b.data(), m);
    lp.lb = Eigen::Map<const Eigen::VectorXd>(lb.data(), n);
    lp.ub = Eigen::Map<const Eigen::VectorXd>(ub.data(), n);
    return lp;
}

bool feasible_point(const LinearProgram& lp, const Eigen::VectorXd& x, double tol) {
    for (int j = 0; j < lp.n_vars(); ++j)
        if (x[j] < lp.lb[j] - tol || x[j] > lp.ub[j] + tol) return false;
    for (int i = 0; i < lp.n_rows(); ++i) {
        double ax = lp.a.row(i).dot(x);
        if (lp.senses[i] == RowSense::le && ax > lp.b[i] + tol) return false;
        if (lp.senses[i] == RowSense::ge && ax < lp.b[i] - tol) return false;
        if (lp.senses[i] == RowSense::eq && std::abs(ax - lp.b[i]) > tol) return false;
    }
    return true;
}

// Brute-force optimum of an LP whose bounds are all finite: every nonempty
// bounded polyhedron attains its optimum at a vertex, and every vertex is the
// intersection of n linearly independent hyperplanes drawn from the rows and
// the active bounds. Enumerate them all.
struct VertexOracle {
    bool feasible = false;
    double value = 0.0;
};

VertexOracle best_vertex(const LinearProgram& lp, double feas_tol) {
    const int n = lp.n_vars();
    const int m = lp.n_rows();
    std::vector<Eigen::RowVectorXd> ha;
    std::vector<double> hb;
    for (int i = 0; i < m; ++i) {
        ha.push_back(lp.a.row(i));
        hb.push_back(lp.b[i]);
    }
    for (int j = 0; j < n; ++j) {
        Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
        e[j] = 1.0;
        ha.push_back(e);
        hb.push_back(lp.lb[j]);
        ha.push_back(e);
        hb.push_back(lp.ub[j]);
    }
    const int total = static_cast<int>(ha.size());

    VertexOracle best;
    std::vector<int> pick(n);
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == n) {
            Eigen::MatrixXd M(n, n);
            Eigen::VectorXd r(n);
            for (int k = 0; k < n; ++k) {
                M.row(k) = ha[pick[k]];
                r[k] = hb[pick[k]];
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
            lu.setThreshold(1e-9);
            if (!lu.isInvertible()) return;
            Eigen::VectorXd x = lu.solve(r);
            if (!x.allFinite()) return;
            if (!feasible_point(lp, x, feas_tol)) return;
            double v = lp.c.dot(x);
            bool better = lp.maximize ? v > best.value : v < best.value;
            if (!best.feasible || better) {
                best.feasible = true;
                best.value = v;
            }
        } else {
            for (int i = start; i <= total - (n - depth); ++i) {
                pick[depth] = i;
                rec(i + 1, depth + 1);
            }
        }
    };
    rec(0, 0);
    return best;
}

void test_textbook_max() {
    // max 3x + 5y  s.t.  x <= 4, 2y <= 12, 3x + 2y <= 18, x,y >= 0
    auto lp = make_lp(true, {3, 5}, {{1, 0}, {0, 2}, {3, 2}},
                      {RowSense::le, RowSense::le, RowSense::le}, {4, 12, 18}, {0, 0},
                      {1e30, 1e30});
    auto res = solve_lp(lp);
    CHECK(res.status == LpStatus::optimal);
    CHECK_NEAR(res.value, 36.0, 1e-9);
    CHECK_NEAR(res.x[0], 2.0, 1e-9);
    CHECK_NEAR(res.x[1], 6.0, 1e-9);
    CHECK(feasible_point(lp, res.x, 1e-9));
}

void test_min_with_ge_and_negative_bounds() {
    // min 2x + y  s.t.  x + y >= 2,  -1 <= x <= 3,  2 <= y <= 5
    auto lp = make_lp(false, {2, 1}, {{1, 1}}, {RowSense::ge}, {2}, {-1, 2}, {3, 5});
    auto res = solve_lp(lp);
    CHECK(res.status == LpStatus::optimal);
    CHECK_NEAR(res.value, 1.0, 1e-9);
    CHECK_NEAR(res.x[0], -1.0, 1e-9);
    CHECK_NEAR(res.x[1], 3.0, 1e-9);
}

void test_equality_duals() {
    // min 2x + 3y  s.t.  x + y = 10,  x - y = 2  ->  x=6, y=4, value 24.
    // Both variables sit strictly inside their bounds, so the duals are the
    // unique y with B' y = c_B: y = (2.5, -0.5), and strong duality y'b = 24.
    auto lp = make_lp(false, {2, 3}, {{1, 1}, {1, -1}}, {RowSense::eq, RowSense::eq}, {10, 2},
                      {0, 0}, {100, 100});
    auto res = solve_lp(lp);
    CHECK(res.status == LpStatus::optimal);
    CHECK_NEAR(res.value, 24.0, 1e-9);
    CHECK_NEAR(res.x[0], 6.0, 1e-9);
    CHECK_NEAR(res.x[1], 4.0, 1e-9);
    CHECK(res.duals.size() == 2);
    CHECK_NEAR(res.duals[0], 2.5, 1e-8);
    CHECK_NEAR(res.duals[1], -0.5, 1e-8);
    CHECK_NEAR(res.duals.dot(lp.b), res.value, 1e-8);
}

void test_bounds_only() {
    // No rows at all: the optimum reads straight off the bounds.
    auto lp = make_lp(false, {1, -2}, {}, {}, {}, {-1, -1}, {2, 3});
    auto res = solve_lp(lp);
    CHECK(res.status == LpStatus::optimal);
    CHECK_NEAR(res.value, -7.0, 1e-12);
    CHECK_NEAR(res.x[0], -1.0, 1e-12);
    CHECK_NEAR(res.x[1], 3.0, 1e-12);
}

void test_unbounded_and_infeasible() {
    auto unb = make_lp(true, {1, 0}, {{0, 1}}, {RowSense::le}, {1}, {0, 0},
                       {std::numeric_limits<double>::infinity(), 2});
    CHECK(solve_lp(unb).status == LpStatus::unbounded);

    auto inf = make_lp(false, {1, 1}, {{1, 1}, {1, 1}}, {RowSense::le, RowSense::ge}, {1, 3},
                       {0, 0}, {10, 10});
    CHECK(solve_lp(inf).status == LpStatus::infeasible);

    // Crossed bounds are infeasible, not an input error.
    auto crossed = make_lp(false, {1}, {{1}}, {RowSense::le}, {5}, {2}, {1});
    CHECK(solve_lp(crossed).status == LpStatus::infeasible);
}

void test_degenerate_cycling_guard() {
    // Beale's cycling example; Bland's rule must terminate at value -1/20.
    double inf = std::numeric_limits<double>::infinity();
    auto lp = make_lp(false, {-0.75, 150, -0.02, 6},
                      {{0.25, -60, -0.04, 9}, {0.5, -90, -0.02, 3}, {0, 0, 1, 0}},
                      {RowSense::le, RowSense::le, RowSense::le}, {0, 0, 1}, {0, 0, 0, 0},
                      {inf, inf, inf, inf});
    auto res = solve_lp(lp);
    CHECK(res.status == LpStatus::optimal);
    CHECK_NEAR(res.value, -0.05, 1e-9);
    CHECK(feasible_point(lp, res.x, 1e-9));
}

void test_iteration_cap() {
    auto lp = make_lp(true, {3, 5}, {{1, 0}, {0, 2}, {3, 2}},
                      {RowSense::le, RowSense::le, RowSense::le}, {4, 12, 18}, {0, 0},
                      {1e30, 1e30});
    CHECK(solve_lp(lp, 1).status == LpStatus::numerical_failure);
}

void test_input_validation() {
    LinearProgram empty;
    CHECK_THROWS(solve_lp(empty), ErrorCode::InvalidArgument);

    auto lp = make_lp(false, {1, 1}, {{1, 1}}, {RowSense::le}, {1}, {0, 0}, {1, 1});
    lp.lb[0] = -std::numeric_limits<double>::infinity();
    CHECK_THROWS(solve_lp(lp), ErrorCode::InvalidArgument);

    auto nan_lp = make_lp(false, {1, 1}, {{1, 1}}, {RowSense::le}, {1}, {0, 0}, {1, 1});
    nan_lp.c[0] = std::nan("");
    CHECK_THROWS(solve_lp(nan_lp), ErrorCode::InvalidArgument);

    auto bad_dims = make_lp(false, {1, 1}, {{1, 1}}, {RowSense::le}, {1}, {0, 0}, {1, 1});
    bad_dims.senses.clear();
    CHECK_THROWS(solve_lp(bad_dims), ErrorCode::InvalidArgument);
}

void test_builder() {
    LpBuilder bld(false);
    int x = bld.add_var(0.0, 4.0, 1.0, "x");
    int y = bld.add_var(0.0, 4.0, 0.0, "y");
    bld.add_cost(y, 2.0);
    bld.add_cost(y, 1.0);  // accumulates: c_y = 3
    int r = bld.add_row(RowSense::ge, 5.0, "cover");
    bld.add_term(r, x, 1.0);
    bld.add_term(r, y, 1.0);
    bld.add_term(r, y, 1.0);  // accumulates: coefficient 2
    CHECK(bld.n_vars() == 2);

    auto lp = bld.build();
    CHECK(lp.n_vars() == 2 && lp.n_rows() == 1);
    CHECK(lp.c[x] == 1.0 && lp.c[y] == 3.0);
    CHECK(lp.a(0, x) == 1.0 && lp.a(0, y) == 2.0);
    CHECK(lp.var_names[0] == "x" && lp.row_names[0] == "cover");

    // min x + 3y s.t. x + 2y >= 5, 0 <= x,y <= 4 -> x=4, y=0.5, value 5.5
    auto res = solve_lp(lp);
    CHECK(res.status == LpStatus::optimal);
    CHECK_NEAR(res.value, 5.5, 1e-9);
    CHECK_NEAR(res.x[x], 4.0, 1e-9);
    CHECK_NEAR(res.x[y], 0.5, 1e-9);

    CHECK_THROWS(bld.add_term(3, x, 1.0), ErrorCode::InvalidArgument);

    std::string dump = lp_to_string(lp);
    CHECK(dump.find("minimize") != std::string::npos);
    CHECK(dump.find("cover") != std::string::npos);
    CHECK(dump.find("x") != std::string::npos);
}

void test_random_against_vertex_oracle() {
    // Integer-ish data keeps every vertex system well conditioned, so the
    // enumerated optimum is trustworthy to much better than the tolerance.
    Rng rng(99);
    int solved = 0, infeasible = 0;
    for (int trial = 0; trial < 120; ++trial) {
        int n = 2 + static_cast<int>(rng.uniform_int(3));  // 2..4
        int m = 1 + static_cast<int>(rng.uniform_int(4));  // 1..4
        LinearProgram lp;
        lp.maximize = rng.uniform() < 0.5;
        lp.c = Eigen::VectorXd(n);
        lp.lb = Eigen::VectorXd::Zero(n);
        lp.ub = Eigen::VectorXd(n);
        for (int j = 0; j < n; ++j) {
            lp.c[j] = static_cast<double>(rng.uniform_int(7)) - 3.0;
            lp.ub[j] = 1.0 + static_cast<double>(rng.uniform_int(3));
        }
        lp.a = Eigen::MatrixXd(m, n);
        lp.b = Eigen::VectorXd(m);
        lp.senses.resize(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j)
                lp.a(i, j) = static_cast<double>(rng.uniform_int(7)) - 3.0;
            double u = rng.uniform();
            lp.senses[i] = u < 0.5 ? RowSense::le : (u < 0.8 ? RowSense::ge : RowSense::eq);
        }
        if (rng.uniform() < 0.7) {
            // Plant a feasible point so most instances are solvable.
            Eigen::VectorXd x0(n);
            for (int j = 0; j < n; ++j)
                x0[j] = lp.ub[j] * 0.25 * static_cast<double>(rng.uniform_int(5));
            for (int i = 0; i < m; ++i) {
                double ax = lp.a.row(i).dot(x0);
                double slack = 0.5 * static_cast<double>(rng.uniform_int(5));
                if (lp.senses[i] == RowSense::le)
                    lp.b[i] = ax + slack;
                else if (lp.senses[i] == RowSense::ge)
                    lp.b[i] = ax - slack;
                else
                    lp.b[i] = ax;
            }
        } else {
            for (int i = 0; i < m; ++i)
                lp.b[i] = static_cast<double>(rng.uniform_int(7)) - 3.0;
        }

        auto res = solve_lp(lp);
        auto oracle = best_vertex(lp, 1e-9);
        if (res.status == LpStatus::optimal) {
            ++solved;
            if (!oracle.feasible) {
                std::fprintf(stderr, "trial %d: solver optimal, oracle infeasible\n%s\n",
                             trial, lp_to_string(lp).c_str());
                CHECK(false);
            }
            double scale = std::max(1.0, std::abs(oracle.value));
            if (std::abs(res.value - oracle.value) > 1e-8 * scale) {
                std::fprintf(stderr, "trial %d: solver %.12g vs oracle %.12g\n%s\n", trial,
                             res.value, oracle.value, lp_to_string(lp).c_str());
                CHECK(false);
            }
            CHECK(feasible_point(lp, res.x, 1e-8));
            CHECK_NEAR(lp.c.dot(res.x), res.value, 1e-9);
        } else if (res.status == LpStatus::infeasible) {
            ++infeasible;
            if (oracle.feasible) {
                std::fprintf(stderr, "trial %d: solver infeasible, oracle found %.12g\n%s\n",
                             trial, oracle.value, lp_to_string(lp).c_str());
                CHECK(false);
            }
        } else {
            std::fprintf(stderr, "trial %d: unexpected status %s\n%s\n", trial,
                         to_string(res.status).c_str(), lp_to_string(lp).c_str());
            CHECK(false);
        }
    }
    // The generator must exercise both outcomes.
    CHECK(solved >= 60);
    CHECK(infeasible >= 5);
    std::printf("random LPs: %d optimal, %d infeasible\n", solved, infeasible);
}

}  // namespace

int main() {
    test_textbook_max();
    test_min_with_ge_and_negative_bounds();
    test_equality_duals();
    test_bounds_only();
    test_unbounded_and_infeasible();
    test_degenerate_cycling_guard();
    test_iteration_cap();
    test_input_validation();
    test_builder();
    test_random_against_vertex_oracle();
    return test_done("test_lp");
}
