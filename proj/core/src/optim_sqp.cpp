#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc::optim {

namespace {

double l1(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().sum(); }

// First-order residual at x for multipliers lambda; bound multipliers are
// implied by the sign of the reduced gradient at active bounds.
double sqp_kkt(const NlpProblem& p, const VectorXd& x, const VectorXd& grad, const MatrixXd& jac,
               const VectorXd& c, const VectorXd& lambda) {
    VectorXd r = grad;
    if (p.num_equalities > 0) r += jac.transpose() * lambda;
    double stat = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double v = std::abs(r(i));
        if (p.lower(i) == p.upper(i)) v = 0.0;
        else if (x(i) <= p.lower(i)) v = std::max(0.0, -r(i));
        else if (x(i) >= p.upper(i)) v = std::max(0.0, r(i));
        stat = std::max(stat, v);
    }
    stat /= 1.0 + grad.cwiseAbs().maxCoeff();
    const double feas = c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0;
    return std::max(stat, feas);
}

}  // namespace

MatrixXd psd_part(const MatrixXd& a) {
    if (a.rows() != a.cols()) throw DimensionError("psd_part: matrix must be square");
    if (a.size() == 0) return a;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (a + a.transpose()));
    const VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

SqpResult solve_sqp(const NlpProblem& p, const VectorXd& x0, const SqpSettings& settings) {
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::Index n = p.num_variables;
    if (x0.size() != n || p.lower.size() != n || p.upper.size() != n)
        throw DimensionError("solve_sqp: variable dimension mismatch");

    SqpResult out;
    VectorXd x = x0.cwiseMax(p.lower).cwiseMin(p.upper);
    VectorXd lambda = VectorXd::Zero(p.num_equalities);
    double rho = 1.0;
    SolveStatus status = SolveStatus::max_iter;
    double kkt = std::numeric_limits<double>::infinity();
    int it = 0;

    double f = p.objective(x);
    VectorXd c = p.num_equalities > 0 ? p.constraints(x) : VectorXd();
    if (c.size() != p.num_equalities) throw DimensionError("solve_sqp: constraint size mismatch");

    for (it = 1; it <= settings.max_iter; ++it) {
        const VectorXd grad = p.gradient(x);
        MatrixXd H = p.hessian(x);
        if (p.constraint_curvature && p.num_equalities > 0 && lambda.cwiseAbs().maxCoeff() > 0.0)
            H += psd_part(p.constraint_curvature(x, lambda));
        H = 0.5 * (H + H.transpose());
        const MatrixXd J = p.num_equalities > 0 ? p.constraint_jacobian(x) : MatrixXd(0, n);

        QpProblem qp;
        qp.H = H;
        qp.g = grad;
        qp.A_eq = J;
        qp.b_eq = -c;
        qp.lower = p.lower - x;
        qp.upper = p.upper - x;
        const QpResult sub = solve_qp(qp, settings.qp);
        if (sub.diag.status == SolveStatus::infeasible) {
            status = SolveStatus::infeasible;
            break;
        }
        const VectorXd& d = sub.x;
        lambda = sub.eq_multipliers;
        if (lambda.size() > 0) rho = std::max(rho, 1.1 * lambda.cwiseAbs().maxCoeff() + 1e-6);
        // A vanishing step of an exactly solved subproblem certifies x with the new multipliers.
        if (sub.diag.status == SolveStatus::optimal && d.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + x.cwiseAbs().maxCoeff())) {
            kkt = sqp_kkt(p, x, grad, J, c, lambda);
            if (kkt <= settings.tol) {
                status = SolveStatus::optimal;
                break;
            }
        }

        const double merit0 = f + rho * l1(c);
        const double slope = std::min(grad.dot(d) - rho * l1(c), 0.0);
        double alpha = 1.0;
        bool accepted = false;
        VectorXd xt;
        double ft = 0.0;
        VectorXd ct;
        while (alpha >= settings.min_step) {
            xt = (x + alpha * d).cwiseMax(p.lower).cwiseMin(p.upper);
            ft = p.objective(xt);
            ct = p.num_equalities > 0 ? p.constraints(xt) : VectorXd();
            const double mt = ft + rho * l1(ct);
            if (std::isfinite(mt) && mt <= merit0 + settings.armijo * alpha * slope + 1e-14 * std::abs(merit0)) {
                out.merit_before.push_back(merit0);
                out.merit_after.push_back(mt);
                accepted = true;
                break;
            }
            if (alpha == 1.0 && p.num_equalities > 0) {
                // Second-order correction: re-solve the subproblem with the
                // constraint value at the trial point, J d + c(x + d) - J d = 0.
                QpProblem soc = qp;
                soc.b_eq = J * d - ct;
                const QpResult corr = solve_qp(soc, settings.qp, &d);
                if (corr.diag.status == SolveStatus::optimal) {
                    const VectorXd xs = (x + corr.x).cwiseMax(p.lower).cwiseMin(p.upper);
                    const double fs = p.objective(xs);
                    const VectorXd cs = p.constraints(xs);
                    const double ms = fs + rho * l1(cs);
                    if (std::isfinite(ms) && ms <= merit0 + settings.armijo * slope + 1e-14 * std::abs(merit0)) {
                        out.merit_before.push_back(merit0);
                        out.merit_after.push_back(ms);
                        xt = xs;
                        ft = fs;
                        ct = cs;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            kkt = sqp_kkt(p, x, grad, J, c, lambda);
            if (kkt <= settings.tol) status = SolveStatus::optimal;
            break;
        }

        x = xt;
        f = ft;
        c = ct;
        const VectorXd g_new = p.gradient(x);
        const MatrixXd j_new = p.num_equalities > 0 ? p.constraint_jacobian(x) : MatrixXd(0, n);
        kkt = sqp_kkt(p, x, g_new, j_new, c, lambda);
        if (kkt <= settings.tol) {
            status = SolveStatus::optimal;
            break;
        }
    }

    out.x = x;
    out.eq_multipliers = lambda;
    out.diag.status = status;
    out.diag.iterations = std::min(it, settings.max_iter);
    out.diag.kkt_residual = std::isfinite(kkt) ? kkt : 0.0;
    out.diag.objective = f;
    out.diag.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace npvdeepc::optim
