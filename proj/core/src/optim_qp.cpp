#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc::optim {

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::max_iter: return "max_iter";
        case SolveStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class BoundState : unsigned char { free, lower, upper, fixed };

void validate(const QpProblem& p) {
    const Eigen::Index n = p.g.size();
    if (p.H.rows() != n || p.H.cols() != n) throw DimensionError("solve_qp: H must be n x n");
    if (p.lower.size() != n || p.upper.size() != n) throw DimensionError("solve_qp: bound size mismatch");
    if (p.A_eq.rows() != p.b_eq.size()) throw DimensionError("solve_qp: A_eq/b_eq row mismatch");
    if (p.A_eq.rows() > 0 && p.A_eq.cols() != n) throw DimensionError("solve_qp: A_eq column mismatch");
    if (!p.H.allFinite() || !p.g.allFinite() || !p.A_eq.allFinite() || !p.b_eq.allFinite())
        throw DimensionError("solve_qp: non-finite problem data");
    const double hscale = std::max(1.0, p.H.cwiseAbs().maxCoeff());
    if ((p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * hscale)
        throw DimensionError("solve_qp: H is not symmetric");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isnan(p.lower(i)) || std::isnan(p.upper(i)) || p.lower(i) > p.upper(i))
            throw DimensionError("solve_qp: inconsistent bounds at variable " + std::to_string(i));
    }
}

VectorXd clip(const VectorXd& x, const VectorXd& lo, const VectorXd& up) {
    return x.cwiseMax(lo).cwiseMin(up);
}

std::vector<BoundState> initial_states(const VectorXd& x, const VectorXd& lo, const VectorXd& up) {
    std::vector<BoundState> st(static_cast<std::size_t>(x.size()), BoundState::free);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (lo(i) == up(i)) st[k] = BoundState::fixed;
        else if (x(i) == lo(i)) st[k] = BoundState::lower;
        else if (x(i) == up(i)) st[k] = BoundState::upper;
    }
    return st;
}

std::vector<Eigen::Index> free_indices(const std::vector<BoundState>& st) {
    std::vector<Eigen::Index> f;
    for (std::size_t i = 0; i < st.size(); ++i) {
        if (st[i] == BoundState::free) f.push_back(static_cast<Eigen::Index>(i));
    }
    return f;
}

MatrixXd gather_cols(const MatrixXd& a, const std::vector<Eigen::Index>& idx) {
    MatrixXd out(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
    return out;
}

VectorXd gather(const VectorXd& v, const std::vector<Eigen::Index>& idx) {
    VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Eigen::Index>(j)) = v(idx[j]);
    return out;
}

// Ratio test along p restricted to free variables. Returns step length (kInf
// when nothing blocks) and the blocking index/state.
double ratio_test(const VectorXd& x, const VectorXd& p, const VectorXd& lo, const VectorXd& up,
                  const std::vector<Eigen::Index>& free, Eigen::Index& block, BoundState& block_state) {
    double alpha = kInf;
    block = -1;
    for (Eigen::Index i : free) {
        if (p(i) < 0.0 && std::isfinite(lo(i))) {
            const double a = (lo(i) - x(i)) / p(i);
            if (a < alpha) {
                alpha = std::max(a, 0.0);
                block = i;
                block_state = BoundState::lower;
            }
        } else if (p(i) > 0.0 && std::isfinite(up(i))) {
            const double a = (up(i) - x(i)) / p(i);
            if (a < alpha) {
                alpha = std::max(a, 0.0);
                block = i;
                block_state = BoundState::upper;
            }
        }
    }
    return alpha;
}

// Pick the working-set bound whose multiplier has the wrong sign by the
// largest margin. Returns -1 when all signs are consistent.
Eigen::Index most_violating(const std::vector<BoundState>& st, const VectorXd& mu, double tol) {
    Eigen::Index worst = -1;
    double worst_val = tol;
    for (std::size_t k = 0; k < st.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        double v = 0.0;
        if (st[k] == BoundState::lower) v = -mu(i);
        else if (st[k] == BoundState::upper) v = mu(i);
        if (v > worst_val) {
            worst_val = v;
            worst = i;
        }
    }
    return worst;
}

struct Phase1Result {
    VectorXd x;
    int iterations = 0;
    double residual = 0.0;
};

// min 1/2 |A x - b|^2 over the box, primal active set with minimum-norm
// subproblem solves. Stops early once the residual is below feas_tol.
Phase1Result bounded_least_squares(const MatrixXd& A, const VectorXd& b, const VectorXd& lo,
                                   const VectorXd& up, VectorXd x, double feas_tol, int max_iter) {
    Phase1Result out;
    auto st = initial_states(x, lo, up);
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it + 1;
        const VectorXd r = b - A * x;
        if (r.cwiseAbs().maxCoeff() <= feas_tol) break;
        const auto free = free_indices(st);
        VectorXd p = VectorXd::Zero(x.size());
        if (!free.empty()) {
            const MatrixXd af = gather_cols(A, free);
            Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(af);
            const VectorXd pf = cod.solve(r);
            for (std::size_t j = 0; j < free.size(); ++j) p(free[j]) = pf(static_cast<Eigen::Index>(j));
        }
        const double pnorm = p.cwiseAbs().maxCoeff();
        if (pnorm <= 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) {
            const VectorXd grad = -A.transpose() * r;
            const Eigen::Index drop = most_violating(st, grad, 1e-14 * (1.0 + grad.cwiseAbs().maxCoeff()));
            if (drop < 0) break;
            st[static_cast<std::size_t>(drop)] = BoundState::free;
            continue;
        }
        Eigen::Index block = -1;
        BoundState bstate = BoundState::free;
        const double alpha = std::min(1.0, ratio_test(x, p, lo, up, free, block, bstate));
        x += alpha * p;
        if (alpha < 1.0 && block >= 0) {
            x(block) = bstate == BoundState::lower ? lo(block) : up(block);
            st[static_cast<std::size_t>(block)] = bstate;
        }
    }
    out.residual = A.rows() > 0 ? (A * x - b).cwiseAbs().maxCoeff() : 0.0;
    out.x = std::move(x);
    return out;
}

}  // namespace

double qp_kkt_residual(const QpProblem& p, const VectorXd& x, const VectorXd& lambda, const VectorXd& mu) {
    VectorXd grad = p.H * x + p.g;
    if (p.num_equalities() > 0) grad += p.A_eq.transpose() * lambda;
    const double gscale = 1.0 + p.g.cwiseAbs().maxCoeff();
    double res = (grad - mu).cwiseAbs().maxCoeff() / gscale;
    if (p.num_equalities() > 0) {
        const double bscale = 1.0 + p.b_eq.cwiseAbs().maxCoeff();
        res = std::max(res, (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff() / bscale);
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double lo_gap = x(i) - p.lower(i);
        const double up_gap = p.upper(i) - x(i);
        res = std::max(res, std::max(-lo_gap, -up_gap));
        // sign and complementarity of the bound multipliers
        if (p.lower(i) == p.upper(i)) continue;
        if (mu(i) > 0.0) res = std::max(res, std::isfinite(lo_gap) ? mu(i) * lo_gap / gscale : mu(i));
        if (mu(i) < 0.0) res = std::max(res, std::isfinite(up_gap) ? -mu(i) * up_gap / gscale : -mu(i));
    }
    return res;
}

QpResult solve_qp(const QpProblem& problem, const QpSettings& settings, const VectorXd* warm_start) {
    const auto t0 = std::chrono::steady_clock::now();
    validate(problem);
    const Eigen::Index n = problem.g.size();
    const Eigen::Index m = problem.b_eq.size();
    const VectorXd& lo = problem.lower;
    const VectorXd& up = problem.upper;

    QpResult out;
    out.eq_multipliers = VectorXd::Zero(m);
    out.bound_multipliers = VectorXd::Zero(n);

    VectorXd x = warm_start && warm_start->size() == n ? *warm_start : VectorXd::Zero(n);
    x = clip(x, lo, up);

    int iterations = 0;
    if (m > 0) {
        const double feas_tol = 1e-11 * (1.0 + problem.b_eq.cwiseAbs().maxCoeff());
        auto ph1 = bounded_least_squares(problem.A_eq, problem.b_eq, lo, up, x, feas_tol,
                                         std::max(settings.max_iter, 4 * static_cast<int>(n)));
        iterations += ph1.iterations;
        x = std::move(ph1.x);
        const double infeas_tol = std::max(settings.tol, 1e-8) * (1.0 + problem.b_eq.cwiseAbs().maxCoeff());
        if (ph1.residual > infeas_tol) {
            out.x = x;
            out.diag.status = SolveStatus::infeasible;
            out.diag.iterations = iterations;
            out.diag.kkt_residual = ph1.residual;
            out.diag.objective = 0.5 * x.dot(problem.H * x) + problem.g.dot(x);
            out.diag.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return out;
        }
    }

    auto st = initial_states(x, lo, up);
    const double hscale = std::max(1.0, problem.H.cwiseAbs().maxCoeff());
    const double gscale = 1.0 + problem.g.cwiseAbs().maxCoeff();
    SolveStatus status = SolveStatus::max_iter;
    VectorXd lambda = VectorXd::Zero(m);
    VectorXd mu = VectorXd::Zero(n);

    for (int it = 0; it < settings.max_iter; ++it) {
        ++iterations;
        const VectorXd grad = problem.H * x + problem.g;
        const auto free = free_indices(st);
        const auto nf = static_cast<Eigen::Index>(free.size());

        // Null-space basis of the equality rows restricted to free variables.
        MatrixXd Z;
        MatrixXd af;
        if (m > 0 && nf > 0) {
            af = gather_cols(problem.A_eq, free);
            Eigen::ColPivHouseholderQR<MatrixXd> qr(af.transpose());
            qr.setThreshold(1e-11);
            const Eigen::Index rank = qr.rank();
            const MatrixXd q = qr.householderQ();
            Z = q.rightCols(nf - rank);
        } else {
            Z = MatrixXd::Identity(nf, nf);
        }

        VectorXd p = VectorXd::Zero(n);
        bool direction_only = false;
        if (Z.cols() > 0) {
            MatrixXd hff(nf, nf);
            for (Eigen::Index a = 0; a < nf; ++a)
                for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = problem.H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
            MatrixXd hr = Z.transpose() * hff * Z;
            const VectorXd rhs = -Z.transpose() * gather(grad, free);
            // Exact Newton step when the reduced Hessian is positive definite;
            // damping only regularises singular directions.
            Eigen::LLT<MatrixXd> llt(hr);
            bool exact = llt.info() == Eigen::Success;
            if (exact) {
                const VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
                exact = diag.minCoeff() > 1e-7 * std::sqrt(hscale);
            }
            VectorXd z;
            if (exact) {
                z = llt.solve(rhs);
            } else {
                hr.diagonal().array() += settings.damping * hscale;
                Eigen::LDLT<MatrixXd> ldlt(hr);
                const VectorXd d = ldlt.vectorD();
                if (d.minCoeff() < -1e-8 * hscale) throw SolverError("solve_qp: Hessian is indefinite on the feasible subspace");
                z = ldlt.solve(rhs);
            }
            const VectorXd pf = Z * z;
            for (Eigen::Index j = 0; j < nf; ++j) p(free[static_cast<std::size_t>(j)]) = pf(j);
            // zero-curvature directions come back scaled by 1/damping
            const double pn = p.cwiseAbs().maxCoeff();
            if (pn > 1e8 * (1.0 + x.cwiseAbs().maxCoeff())) {
                p /= pn;
                direction_only = true;
            }
        }

        const double pnorm = p.cwiseAbs().maxCoeff();
        if (pnorm <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) {
            lambda.setZero();
            if (m > 0) {
                if (nf > 0) {
                    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(af.transpose());
                    lambda = cod.solve(-gather(grad, free));
                } else {
                    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(problem.A_eq.transpose());
                    lambda = cod.solve(-grad);
                }
            }
            VectorXd full = grad;
            if (m > 0) full += problem.A_eq.transpose() * lambda;
            mu.setZero();
            for (std::size_t k = 0; k < st.size(); ++k) {
                if (st[k] != BoundState::free) mu(static_cast<Eigen::Index>(k)) = full(static_cast<Eigen::Index>(k));
            }
            const Eigen::Index drop = most_violating(st, mu, 1e-10 * gscale);
            if (drop < 0) {
                status = SolveStatus::optimal;
                break;
            }
            st[static_cast<std::size_t>(drop)] = BoundState::free;
            continue;
        }

        Eigen::Index block = -1;
        BoundState bstate = BoundState::free;
        double alpha = ratio_test(x, p, lo, up, free, block, bstate);
        if (direction_only) {
            if (!std::isfinite(alpha)) throw SolverError("solve_qp: problem is unbounded below");
        } else {
            alpha = std::min(alpha, 1.0);
        }
        x += alpha * p;
        if (block >= 0 && (direction_only || alpha < 1.0)) {
            x(block) = bstate == BoundState::lower ? lo(block) : up(block);
            st[static_cast<std::size_t>(block)] = bstate;
        }
    }

    out.x = x;
    out.eq_multipliers = lambda;
    out.bound_multipliers = mu;
    out.diag.iterations = iterations;
    out.diag.kkt_residual = qp_kkt_residual(problem, x, lambda, mu);
    out.diag.objective = 0.5 * x.dot(problem.H * x) + problem.g.dot(x);
    if (status == SolveStatus::optimal && out.diag.kkt_residual > settings.tol) status = SolveStatus::max_iter;
    out.diag.status = status;
    out.diag.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace npvdeepc::optim
