#include "voltmesh/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace voltmesh {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRcTol = 1e-9;     // reduced-cost optimality tolerance
constexpr double kPivTol = 1e-9;    // smallest usable pivot magnitude
constexpr double kRatioTie = 1e-9;  // leaving-variable tie window

enum VarState : char { at_lb = 0, at_ub = 1, basic = 2 };

// Simplex working state over the augmented variable set
// [structural | slacks/surplus | artificials].
struct Core {
    int m = 0;       // rows
    int nv = 0;      // total variables
    int n_real = 0;  // structural + slack count (artificials start here)
    Eigen::MatrixXd A;
    Eigen::VectorXd b, cc, lb, ub, x;
    std::vector<int> basis;       // row -> variable
    std::vector<char> state;      // variable -> VarState
    Eigen::MatrixXd Binv;
    long iters = 0;

    void recompute_binv() {
        Eigen::MatrixXd B(m, m);
        for (int i = 0; i < m; ++i) B.col(i) = A.col(basis[i]);
        Binv = B.partialPivLu().inverse();
    }

    void recompute_basics() {
        Eigen::VectorXd btilde = b;
        for (int j = 0; j < nv; ++j) {
            if (state[j] == basic) continue;
            if (x[j] != 0.0) btilde -= A.col(j) * x[j];
        }
        Eigen::VectorXd xb = Binv * btilde;
        for (int i = 0; i < m; ++i) x[basis[i]] = xb[i];
    }

    Eigen::VectorXd duals() const {
        Eigen::VectorXd cb(m);
        for (int i = 0; i < m; ++i) cb[i] = cc[basis[i]];
        return Binv.transpose() * cb;
    }

    // Runs Bland-rule iterations until optimal/unbounded/cap.
    LpStatus iterate(long max_iters) {
        while (iters < max_iters) {
            if (iters % 64 == 0) {
                recompute_binv();
                recompute_basics();
            }
            ++iters;
            Eigen::VectorXd y = duals();
            Eigen::VectorXd r = cc - A.transpose() * y;

            int enter = -1;
            int dir = 0;  // +1 entering rises from lb, -1 falls from ub
            for (int j = 0; j < nv; ++j) {
                if (state[j] == basic) continue;
                if (ub[j] - lb[j] < kPivTol) continue;  // fixed variable
                if (state[j] == at_lb && r[j] < -kRcTol) {
                    enter = j;
                    dir = 1;
                    break;
                }
                if (state[j] == at_ub && r[j] > kRcTol) {
                    enter = j;
                    dir = -1;
                    break;
                }
            }
            if (enter < 0) return LpStatus::optimal;

            Eigen::VectorXd d = Binv * A.col(enter);
            // Ratio test over the basics, Bland tie-breaking by variable index.
            double best_t = kInf;
            int leave_row = -1;
            char leave_state = at_lb;
            for (int i = 0; i < m; ++i) {
                double delta = -dir * d[i];  // movement of basic i per unit step
                int v = basis[i];
                double t;
                char target;
                if (delta < -kPivTol) {
                    t = (x[v] - lb[v]) / (-delta);
                    target = at_lb;
                } else if (delta > kPivTol) {
                    if (ub[v] == kInf) continue;
                    t = (ub[v] - x[v]) / delta;
                    target = at_ub;
                } else {
                    continue;
                }
                if (t < 0.0) t = 0.0;  // tiny numerical overshoot
                if (t < best_t - kRatioTie ||
                    (t <= best_t + kRatioTie && (leave_row < 0 || v < basis[leave_row]))) {
                    best_t = std::min(t, best_t);
                    leave_row = i;
                    leave_state = target;
                }
            }
            double flip_t = ub[enter] - lb[enter];  // entering's own travel, may be inf
            bool flip = leave_row < 0 || flip_t < best_t;
            double t_max = flip ? flip_t : best_t;
            if (t_max == kInf) return LpStatus::unbounded;

            for (int i = 0; i < m; ++i) x[basis[i]] -= dir * t_max * d[i];
            x[enter] += dir * t_max;

            if (flip) {
                // Bound flip: entering variable runs to its opposite bound.
                state[enter] = dir > 0 ? at_ub : at_lb;
                x[enter] = dir > 0 ? ub[enter] : lb[enter];
                continue;
            }
            int lv = basis[leave_row];
            state[lv] = leave_state;
            x[lv] = leave_state == at_lb ? lb[lv] : ub[lv];
            basis[leave_row] = enter;
            state[enter] = basic;
            double piv = d[leave_row];
            if (std::abs(piv) < kPivTol) {
                recompute_binv();
                recompute_basics();
                continue;
            }
            Binv.row(leave_row) /= piv;
            for (int i = 0; i < m; ++i) {
                if (i == leave_row) continue;
                if (d[i] != 0.0) Binv.row(i) -= d[i] * Binv.row(leave_row);
            }
        }
        return LpStatus::numerical_failure;
    }
};

void check_inputs(const LinearProgram& lp) {
    const int n = lp.n_vars();
    const int m = lp.n_rows();
    if (n <= 0) throw Error(ErrorCode::InvalidArgument, "lp has no variables");
    if (lp.a.rows() != m || (m > 0 && lp.a.cols() != n) ||
        static_cast<int>(lp.senses.size()) != m || lp.lb.size() != n || lp.ub.size() != n)
        throw Error(ErrorCode::InvalidArgument, "lp dimensions disagree");
    if (!lp.c.allFinite() || !lp.b.allFinite() || (m > 0 && !lp.a.allFinite()))
        throw Error(ErrorCode::InvalidArgument, "lp has non-finite coefficients");
    for (int j = 0; j < n; ++j) {
        if (!std::isfinite(lp.lb[j]))
            throw Error(ErrorCode::InvalidArgument,
                        "lp lower bounds must be finite (shift free variables)");
        if (std::isnan(lp.ub[j]))
            throw Error(ErrorCode::InvalidArgument, "lp upper bound is NaN");
    }
}

}  // namespace

std::string to_string(LpStatus s) {
    switch (s) {
        case LpStatus::optimal:
            return "optimal";
        case LpStatus::infeasible:
            return "infeasible";
        case LpStatus::unbounded:
            return "unbounded";
        case LpStatus::numerical_failure:
            return "numerical_failure";
    }
    return "?";
}

LpResult solve_lp(const LinearProgram& lp, long max_iters) {
    check_inputs(lp);
    const int n = lp.n_vars();
    const int m = lp.n_rows();

    LpResult res;
    for (int j = 0; j < n; ++j) {
        if (lp.lb[j] > lp.ub[j] + 1e-12) {
            res.status = LpStatus::infeasible;
            return res;
        }
    }

    Core core;
    int n_slack = 0;
    for (auto s : lp.senses)
        if (s != RowSense::eq) ++n_slack;
    core.m = m;
    core.n_real = n + n_slack;
    core.nv = core.n_real + m;  // one artificial per row
    core.A = Eigen::MatrixXd::Zero(m, core.nv);
    if (m > 0) core.A.leftCols(n) = lp.a;
    core.b = lp.b;
    core.lb = Eigen::VectorXd::Zero(core.nv);
    core.ub = Eigen::VectorXd::Zero(core.nv);
    core.lb.head(n) = lp.lb;
    core.ub.head(n) = lp.ub;
    int sl = n;
    for (int i = 0; i < m; ++i) {
        if (lp.senses[i] == RowSense::eq) continue;
        core.A(i, sl) = lp.senses[i] == RowSense::le ? 1.0 : -1.0;
        core.lb[sl] = 0.0;
        core.ub[sl] = kInf;
        ++sl;
    }

    // Nonbasic start: structural at the finite bound nearer zero, slacks at 0.
    core.x = Eigen::VectorXd::Zero(core.nv);
    core.state.assign(core.nv, at_lb);
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(core.ub[j]) && std::abs(core.ub[j]) < std::abs(core.lb[j])) {
            core.state[j] = at_ub;
            core.x[j] = core.ub[j];
        } else {
            core.x[j] = core.lb[j];
        }
    }

    // Artificial basis sized to the start residual, so phase 1 starts feasible.
    Eigen::VectorXd resid = core.b;
    for (int j = 0; j < core.n_real; ++j)
        if (core.x[j] != 0.0) resid -= core.A.col(j) * core.x[j];
    core.basis.resize(m);
    for (int i = 0; i < m; ++i) {
        int aj = core.n_real + i;
        core.A(i, aj) = resid[i] >= 0.0 ? 1.0 : -1.0;
        core.lb[aj] = 0.0;
        core.ub[aj] = kInf;
        core.x[aj] = std::abs(resid[i]);
        core.basis[i] = aj;
        core.state[aj] = basic;
    }

    if (max_iters <= 0) max_iters = 2000 + 50L * (m + core.nv);

    // Phase 1: minimize the artificial mass.
    core.cc = Eigen::VectorXd::Zero(core.nv);
    core.cc.tail(m).setConstant(1.0);
    LpStatus st = core.iterate(max_iters);
    res.iterations = core.iters;
    if (st == LpStatus::numerical_failure) {
        res.status = st;
        return res;
    }
    core.recompute_binv();
    core.recompute_basics();
    double art_mass = 0.0;
    for (int i = 0; i < m; ++i)
        if (core.basis[i] >= core.n_real) art_mass += std::abs(core.x[core.basis[i]]);
    for (int j = core.n_real; j < core.nv; ++j)
        if (core.state[j] != basic) art_mass += std::abs(core.x[j]);
    if (art_mass > 1e-7) {
        res.status = LpStatus::infeasible;
        return res;
    }

    // Drive zero-valued artificials out of the basis where a real pivot exists.
    for (int i = 0; i < m; ++i) {
        if (core.basis[i] < core.n_real) continue;
        Eigen::RowVectorXd brow = core.Binv.row(i);
        int enter = -1;
        for (int j = 0; j < core.n_real; ++j) {
            if (core.state[j] == basic) continue;
            if (core.ub[j] - core.lb[j] < kPivTol) continue;
            double coef = brow.dot(core.A.col(j));
            if (std::abs(coef) > 1e-7) {
                enter = j;
                break;
            }
        }
        if (enter < 0) continue;  // redundant row; artificial stays pinned at 0
        Eigen::VectorXd d = core.Binv * core.A.col(enter);
        int lv = core.basis[i];
        core.state[lv] = at_lb;
        core.x[lv] = 0.0;
        core.basis[i] = enter;
        core.state[enter] = basic;
        core.Binv.row(i) /= d[i];
        for (int k = 0; k < m; ++k) {
            if (k == i) continue;
            if (d[k] != 0.0) core.Binv.row(k) -= d[k] * core.Binv.row(i);
        }
        core.recompute_basics();
    }

    // Phase 2: real objective; artificials pinned to zero.
    core.cc.setZero();
    core.cc.head(n) = lp.maximize ? Eigen::VectorXd(-lp.c) : lp.c;
    for (int j = core.n_real; j < core.nv; ++j) core.ub[j] = 0.0;
    st = core.iterate(max_iters);
    res.iterations = core.iters;
    if (st != LpStatus::optimal) {
        res.status = st;
        return res;
    }

    core.recompute_binv();
    core.recompute_basics();
    res.x = core.x.head(n);
    // Snap solution values onto bounds they graze.
    for (int j = 0; j < n; ++j) {
        if (res.x[j] < lp.lb[j]) res.x[j] = lp.lb[j];
        if (std::isfinite(lp.ub[j]) && res.x[j] > lp.ub[j]) res.x[j] = lp.ub[j];
    }
    res.value = lp.c.dot(res.x);
    res.duals = core.duals();
    res.status = LpStatus::optimal;
    return res;
}

std::string lp_to_string(const LinearProgram& lp) {
    std::ostringstream os;
    auto vname = [&](int j) {
        if (j < static_cast<int>(lp.var_names.size()) && !lp.var_names[j].empty())
            return lp.var_names[j];
        return "x" + std::to_string(j);
    };
    os << (lp.maximize ? "maximize" : "minimize") << "\n  ";
    bool first = true;
    for (int j = 0; j < lp.n_vars(); ++j) {
        if (lp.c[j] == 0.0) continue;
        if (!first) os << " + ";
        os << lp.c[j] << " " << vname(j);
        first = false;
    }
    if (first) os << "0";
    os << "\nsubject to\n";
    for (int i = 0; i < lp.n_rows(); ++i) {
        os << "  ";
        if (i < static_cast<int>(lp.row_names.size()) && !lp.row_names[i].empty())
            os << lp.row_names[i] << ": ";
        first = true;
        for (int j = 0; j < lp.n_vars(); ++j) {
            if (lp.a(i, j) == 0.0) continue;
            if (!first) os << " + ";
            os << lp.a(i, j) << " " << vname(j);
            first = false;
        }
        if (first) os << "0";
        const char* rel = lp.senses[i] == RowSense::le   ? "<="
                          : lp.senses[i] == RowSense::eq ? "="
                                                         : ">=";
        os << " " << rel << " " << lp.b[i] << "\n";
    }
    os << "bounds\n";
    for (int j = 0; j < lp.n_vars(); ++j) {
        os << "  " << lp.lb[j] << " <= " << vname(j) << " <= ";
        if (std::isfinite(lp.ub[j]))
            os << lp.ub[j];
        else
            os << "inf";
        os << "\n";
    }
    return os.str();
}

int LpBuilder::add_var(double lb, double ub, double cost, std::string name) {
    cost_.push_back(cost);
    lb_.push_back(lb);
    ub_.push_back(ub);
    var_names_.push_back(std::move(name));
    return static_cast<int>(cost_.size()) - 1;
}

void LpBuilder::add_cost(int var, double delta) { cost_.at(var) += delta; }

int LpBuilder::add_row(RowSense sense, double rhs, std::string name) {
    senses_.push_back(sense);
    rhs_.push_back(rhs);
    row_names_.push_back(std::move(name));
    return static_cast<int>(rhs_.size()) - 1;
}

void LpBuilder::add_term(int row, int var, double coeff) {
    if (row < 0 || row >= static_cast<int>(rhs_.size()) || var < 0 ||
        var >= static_cast<int>(cost_.size()))
        throw Error(ErrorCode::InvalidArgument, "LpBuilder term out of range");
    terms_.push_back({row, var, coeff});
}

LinearProgram LpBuilder::build() const {
    LinearProgram lp;
    lp.maximize = maximize_;
    const int n = static_cast<int>(cost_.size());
    const int m = static_cast<int>(rhs_.size());
    lp.c = Eigen::Map<const Eigen::VectorXd>(cost_.data(), n);
    lp.lb = Eigen::Map<const Eigen::VectorXd>(lb_.data(), n);
    lp.ub = Eigen::Map<const Eigen::VectorXd>(ub_.data(), n);
    lp.b = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), m);
    lp.senses = senses_;
    lp.a = Eigen::MatrixXd::Zero(m, n);
    for (const auto& t : terms_) lp.a(t.row, t.var) += t.coeff;
    lp.var_names = var_names_;
    lp.row_names = row_names_;
    return lp;
}

}  // namespace voltmesh
