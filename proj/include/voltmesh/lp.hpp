#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "voltmesh/common.hpp"

namespace voltmesh {

enum class RowSense { le, eq, ge };
enum class LpStatus { optimal, infeasible, unbounded, numerical_failure };

std::string to_string(LpStatus s);

// min (or max) c'x  s.t.  a x {<=,=,>=} b,  lb <= x <= ub.
// Lower bounds must be finite; upper bounds may be +infinity.
struct LinearProgram {
    bool maximize = false;
    Eigen::VectorXd c;
    Eigen::MatrixXd a;
    std::vector<RowSense> senses;
    Eigen::VectorXd b;
    Eigen::VectorXd lb, ub;
    std::vector<std::string> var_names;  // optional, for dumps
    std::vector<std::string> row_names;

    int n_vars() const { return static_cast<int>(c.size()); }
    int n_rows() const { return static_cast<int>(b.size()); }
};

struct LpResult {
    LpStatus status = LpStatus::numerical_failure;
    Eigen::VectorXd x;      // structural variables
    double value = 0.0;     // c'x in the input orientation
    Eigen::VectorXd duals;  // row multipliers of the minimized form
    long iterations = 0;
};

// Bounded-variable two-phase primal simplex with Bland's anti-cycling rule.
// max_iters = 0 picks a cap from the problem size; hitting the cap yields
// status numerical_failure.
LpResult solve_lp(const LinearProgram& lp, long max_iters = 0);

std::string lp_to_string(const LinearProgram& lp);

// Incremental construction helper used by the rolling-horizon planner.
class LpBuilder {
  public:
    explicit LpBuilder(bool maximize = false) : maximize_(maximize) {}
    int add_var(double lb, double ub, double cost, std::string name = "");
    void add_cost(int var, double delta);
    int add_row(RowSense sense, double rhs, std::string name = "");
    void add_term(int row, int var, double coeff);
    int n_vars() const { return static_cast<int>(cost_.size()); }
    LinearProgram build() const;

  private:
    bool maximize_;
    std::vector<double> cost_, lb_, ub_;
    std::vector<std::string> var_names_, row_names_;
    std::vector<RowSense> senses_;
    std::vector<double> rhs_;
    struct Term {
        int row, var;
        double coeff;
    };
    std::vector<Term> terms_;
};

}  // namespace voltmesh
