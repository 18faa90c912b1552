#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace npvdeepc::optim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Dense linear algebra helpers
// ---------------------------------------------------------------------------

/// Default numerical-rank threshold: max(rows, cols) * eps * sigma_max.
double default_rank_tolerance(const MatrixXd& a, double sigma_max);

/// Moore-Penrose pseudo-inverse through a full SVD. Singular values at or
/// below rcond * sigma_max are treated as zero. A negative rcond selects the
/// default max(rows, cols) * eps.
MatrixXd pinv(const MatrixXd& a, double rcond = -1.0);

/// Number of singular values above tol * sigma_max (tol < 0: default).
int numerical_rank(const MatrixXd& a, double tol = -1.0);

/// Orthonormal basis of null(a) as columns (possibly zero columns).
MatrixXd null_space(const MatrixXd& a, double tol = -1.0);

// ---------------------------------------------------------------------------
// Quadratic programming
// ---------------------------------------------------------------------------

enum class SolveStatus { optimal, max_iter, infeasible };

std::string to_string(SolveStatus s);

struct SolveDiagnostics {
    SolveStatus status = SolveStatus::max_iter;
    int iterations = 0;
    double kkt_residual = 0.0;
    double wall_time_s = 0.0;
    double objective = 0.0;
};

/// min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  lower <= x <= upper.
/// Infinite bounds are allowed; lower == upper fixes a variable.
struct QpProblem {
    MatrixXd H;
    VectorXd g;
    MatrixXd A_eq;
    VectorXd b_eq;
    VectorXd lower;
    VectorXd upper;

    [[nodiscard]] int num_variables() const { return static_cast<int>(g.size()); }
    [[nodiscard]] int num_equalities() const { return static_cast<int>(b_eq.size()); }
};

struct QpSettings {
    double tol = 1e-6;
    int max_iter = 500;
    double damping = 1e-10;  ///< diagonal added to reduced Hessians
};

struct QpResult {
    VectorXd x;
    VectorXd eq_multipliers;     ///< lambda in  H x + g + A' lambda - mu = 0
    VectorXd bound_multipliers;  ///< mu: >= 0 on active lower, <= 0 on active upper
    SolveDiagnostics diag;
};

/// Primal active-set method over the variable bounds. Equality constraints are
/// always in the working set and are handled by a null-space reduction of the
/// KKT system. A bounded least-squares phase 1 supplies a feasible start.
///
/// Throws DimensionError on malformed input and SolverError when a reduced
/// Hessian is indefinite beyond tolerance.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                  const VectorXd* warm_start = nullptr);

/// Residual of the first-order conditions, scaled by problem magnitude.
double qp_kkt_residual(const QpProblem& problem, const VectorXd& x, const VectorXd& lambda,
                       const VectorXd& mu);

// ---------------------------------------------------------------------------
// Sequential quadratic programming
// ---------------------------------------------------------------------------

/// Smooth NLP  min f(x)  s.t.  c(x) = 0,  lower <= x <= upper.
/// `hessian` returns the (Gauss-Newton) Hessian model of f. The optional
/// `constraint_curvature(x, lambda)` returns sum_i lambda_i Hess c_i(x); only
/// its positive semidefinite part enters the subproblem, so the model never
/// under-estimates the curvature that the multipliers add to the Lagrangian.
struct NlpProblem {
    int num_variables = 0;
    int num_equalities = 0;
    std::function<double(const VectorXd&)> objective;
    std::function<VectorXd(const VectorXd&)> gradient;
    std::function<MatrixXd(const VectorXd&)> hessian;
    std::function<VectorXd(const VectorXd&)> constraints;
    std::function<MatrixXd(const VectorXd&)> constraint_jacobian;
    std::function<MatrixXd(const VectorXd&, const VectorXd&)> constraint_curvature;
    VectorXd lower;
    VectorXd upper;
};

struct SqpSettings {
    double tol = 1e-6;
    int max_iter = 50;
    QpSettings qp{};
    double armijo = 1e-4;
    double min_step = 1e-8;
};

struct SqpResult {
    VectorXd x;
    VectorXd eq_multipliers;
    SolveDiagnostics diag;
    /// Merit values (same penalty weight) before and after each accepted step.
    std::vector<double> merit_before;
    std::vector<double> merit_after;
};

/// SQP with backtracking on the l1 merit f + rho * |c|_1. Without a
/// constraint_curvature callback this is Gauss-Newton SQP.
SqpResult solve_sqp(const NlpProblem& problem, const VectorXd& x0, const SqpSettings& settings = {});

/// Positive semidefinite part of a symmetric matrix (negative eigenvalues clipped).
MatrixXd psd_part(const MatrixXd& a);

/// Largest relative error between an analytic Jacobian and central differences.
double jacobian_fd_error(const std::function<VectorXd(const VectorXd&)>& fn,
                         const std::function<MatrixXd(const VectorXd&)>& jac, const VectorXd& x,
                         double step = 1e-6);

}  // namespace npvdeepc::optim
