#include "npvdeepc/deepc.hpp"

#include <limits>

#include <Eigen/SVD>

#include "npvdeepc/errors.hpp"

namespace npvdeepc::deepc {

using control::ControllerConfig;
using control::PastData;
using control::StepResult;

Regularizer regularizer_from_string(const std::string& name) {
    if (name == "projection") return Regularizer::projection;
    if (name == "two_norm") return Regularizer::two_norm;
    if (name == "one_norm") return Regularizer::one_norm;
    throw ConfigError("unknown regularizer '" + name + "' (expected projection, two_norm or one_norm)");
}

std::string to_string(Regularizer r) {
    switch (r) {
        case Regularizer::projection: return "projection";
        case Regularizer::two_norm: return "two_norm";
        case Regularizer::one_norm: return "one_norm";
    }
    return "?";
}

MatrixXd build_projector(const HankelSet& hs) {
    const MatrixXd m = hs.past_and_future_inputs();
    if (m.size() == 0) throw DimensionError("build_projector: empty Hankel set");
    return optim::pinv(m) * m;
}

// Variable layout: [g (Lc) | sigma (ny T) | u (nu N) | y (ny N)], with g
// replaced by [g+ | g-] for the one-norm regulariser.
DeepcController::DeepcController(HankelSet hs, ControllerConfig cfg, Regularizer reg)
    : hs_(std::move(hs)), cfg_(std::move(cfg)), reg_(reg) {
    cfg_.validate();
    if (hs_.t_ini != cfg_.t_ini || hs_.horizon != cfg_.horizon)
        throw DimensionError("DeepcController: Hankel horizons do not match the controller");
    if (hs_.Up.rows() != cfg_.n_u() * cfg_.t_ini || hs_.Yp.rows() != cfg_.n_y() * cfg_.t_ini)
        throw DimensionError("DeepcController: Hankel channel counts do not match the weights");
    projector_ = build_projector(hs_);

    const int lc = hs_.cols();
    const int ng = reg_ == Regularizer::one_norm ? 2 * lc : lc;
    const int ns = static_cast<int>(hs_.Yp.rows());
    const int nu = static_cast<int>(hs_.Uf.rows());
    const int ny = static_cast<int>(hs_.Yf.rows());
    const int n = ng + ns + nu + ny;
    const int m = static_cast<int>(hs_.Up.rows()) + ns + nu + ny;

    MatrixXd hankel_rows(m, lc);
    hankel_rows << hs_.Up, hs_.Yp, hs_.Uf, hs_.Yf;
    A_eq_ = MatrixXd::Zero(m, n);
    A_eq_.leftCols(lc) = hankel_rows;
    if (reg_ == Regularizer::one_norm) A_eq_.middleCols(lc, lc) = -hankel_rows;
    const int r0 = static_cast<int>(hs_.Up.rows());
    A_eq_.block(r0, ng, ns, ns) = -MatrixXd::Identity(ns, ns);
    A_eq_.block(r0 + ns, ng + ns, nu, nu) = -MatrixXd::Identity(nu, nu);
    A_eq_.block(r0 + ns + nu, ng + ns + nu, ny, ny) = -MatrixXd::Identity(ny, ny);

    H_reg_ = MatrixXd::Zero(n, n);
    g_reg_ = VectorXd::Zero(n);
    switch (reg_) {
        case Regularizer::projection: {
            const MatrixXd complement = MatrixXd::Identity(lc, lc) - projector_;
            H_reg_.topLeftCorner(lc, lc) = 2.0 * cfg_.lambda_g * complement.transpose() * complement;
            break;
        }
        case Regularizer::two_norm:
            H_reg_.topLeftCorner(lc, lc) = 2.0 * cfg_.lambda_g * MatrixXd::Identity(lc, lc);
            break;
        case Regularizer::one_norm:
            g_reg_.head(ng).setConstant(cfg_.lambda_g);
            break;
    }
    H_reg_.block(ng, ng, ns, ns) = 2.0 * cfg_.lambda_sigma * MatrixXd::Identity(ns, ns);

    const MatrixXd mrows = hs_.past_and_future_inputs();
    reducible_ = reg_ != Regularizer::one_norm && optim::numerical_rank(mrows) == mrows.rows();
    reduced_ = reducible_;
    if (reducible_) {
        m_pinv_ = optim::pinv(mrows);
        b_out_ = hs_.Yf * m_pinv_;
        const MatrixXd null = optim::null_space(mrows);
        Eigen::JacobiSVD<MatrixXd> svd(hs_.Yf * null, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const VectorXd& sv = svd.singularValues();
        const double tol = optim::default_rank_tolerance(hs_.Yf * null, sv.size() > 0 ? sv(0) : 0.0);
        Eigen::Index rank = 0;
        while (rank < sv.size() && sv(rank) > tol) ++rank;
        n_out_ = svd.matrixU().leftCols(rank) * sv.head(rank).asDiagonal();
        n_basis_ = null * svd.matrixV().leftCols(rank);
    }
}

StepResult DeepcController::step(const PastData& past, const VectorXd& r, const VectorXd& u_prev) {
    if (past.u_ini.size() != hs_.Up.rows() || past.y_ini.size() != hs_.Yp.rows())
        throw DimensionError("DeepcController: past window length does not match T_ini");
    return reduced_ ? step_reduced(past, r, u_prev) : step_full(past, r, u_prev);
}

// Variable layout: [u (nu N) | y (ny N) | sigma (ny T) | z (rank)].
StepResult DeepcController::step_reduced(const PastData& past, const VectorXd& r, const VectorXd& u_prev) {
    const double t0 = control::thread_cpu_seconds();
    const int nu = static_cast<int>(hs_.Uf.rows());
    const int ny = static_cast<int>(hs_.Yf.rows());
    const int ns = static_cast<int>(hs_.Yp.rows());
    const int nup = static_cast<int>(hs_.Up.rows());
    const int nz = static_cast<int>(n_basis_.cols());
    const int n = nu + ny + ns + nz;
    const int iu = 0, iy = nu, is = nu + ny, iz = nu + ny + ns;

    const control::TrackingCost cost = control::tracking_cost(cfg_, r, u_prev);
    optim::QpProblem qp;
    qp.H = MatrixXd::Zero(n, n);
    qp.g = VectorXd::Zero(n);
    qp.H.block(iu, iu, nu, nu) = cost.Huu;
    qp.H.block(iy, iy, ny, ny) = cost.Hyy;
    qp.g.segment(iu, nu) = cost.gu;
    qp.g.segment(iy, ny) = cost.gy;
    qp.H.block(is, is, ns, ns) = 2.0 * cfg_.lambda_sigma * MatrixXd::Identity(ns, ns);
    qp.H.block(iz, iz, nz, nz) = 2.0 * cfg_.lambda_g * MatrixXd::Identity(nz, nz);

    // Row-space part of g: g0 = c0 + G x.
    const int lc = hs_.cols();
    const VectorXd c0 = m_pinv_.leftCols(nup) * past.u_ini + m_pinv_.middleCols(nup, ns) * past.y_ini;
    MatrixXd G = MatrixXd::Zero(lc, n);
    G.middleCols(iu, nu) = m_pinv_.rightCols(nu);
    G.middleCols(is, ns) = m_pinv_.middleCols(nup, ns);
    double reg_constant = 0.0;
    if (reg_ == Regularizer::two_norm) {
        qp.H += 2.0 * cfg_.lambda_g * G.transpose() * G;
        qp.g += 2.0 * cfg_.lambda_g * G.transpose() * c0;
        reg_constant = cfg_.lambda_g * c0.squaredNorm();
    }

    // y = Yf (g0 + n_basis z)
    qp.A_eq = MatrixXd::Zero(ny, n);
    qp.A_eq.middleCols(iy, ny) = MatrixXd::Identity(ny, ny);
    qp.A_eq.middleCols(iu, nu) = -b_out_.rightCols(nu);
    qp.A_eq.middleCols(is, ns) = -b_out_.middleCols(nup, ns);
    qp.A_eq.middleCols(iz, nz) = -n_out_;
    qp.b_eq = b_out_.leftCols(nup) * past.u_ini + b_out_.middleCols(nup, ns) * past.y_ini;

    constexpr double inf = std::numeric_limits<double>::infinity();
    VectorXd u_lo, u_hi, y_lo, y_hi;
    control::horizon_bounds(cfg_, u_lo, u_hi, y_lo, y_hi);
    qp.lower = VectorXd::Constant(n, -inf);
    qp.upper = VectorXd::Constant(n, inf);
    qp.lower.segment(iu, nu) = u_lo;
    qp.upper.segment(iu, nu) = u_hi;
    qp.lower.segment(iy, ny) = y_lo;
    qp.upper.segment(iy, ny) = y_hi;

    const optim::QpResult sol = optim::solve_qp(qp, cfg_.qp);
    if (sol.diag.status == optim::SolveStatus::infeasible)
        throw SolverError("deepc: QP infeasible (kkt residual " + std::to_string(sol.diag.kkt_residual) + ")");

    StepResult res;
    res.u_pred = sol.x.segment(iu, nu);
    res.y_pred = sol.x.segment(iy, ny);
    res.u_apply = res.u_pred.head(cfg_.n_u());
    res.slack = sol.x.segment(is, ns);
    res.g = c0 + G * sol.x + n_basis_ * sol.x.segment(iz, nz);
    res.cost = cost.value(res.u_pred, res.y_pred);
    res.objective = sol.diag.objective + cost.constant + reg_constant;
    res.diag = sol.diag;
    res.cpu_time_s = control::thread_cpu_seconds() - t0;
    return res;
}

StepResult DeepcController::step_full(const PastData& past, const VectorXd& r, const VectorXd& u_prev) {
    const double t0 = control::thread_cpu_seconds();
    const int lc = hs_.cols();
    const int ng = reg_ == Regularizer::one_norm ? 2 * lc : lc;
    const int ns = static_cast<int>(hs_.Yp.rows());
    const int nu = static_cast<int>(hs_.Uf.rows());
    const int ny = static_cast<int>(hs_.Yf.rows());

    const control::TrackingCost cost = control::tracking_cost(cfg_, r, u_prev);
    optim::QpProblem qp;
    qp.H = H_reg_;
    qp.g = g_reg_;
    qp.H.block(ng + ns, ng + ns, nu, nu) += cost.Huu;
    qp.H.block(ng + ns + nu, ng + ns + nu, ny, ny) += cost.Hyy;
    qp.g.segment(ng + ns, nu) += cost.gu;
    qp.g.segment(ng + ns + nu, ny) += cost.gy;
    qp.A_eq = A_eq_;
    qp.b_eq = VectorXd::Zero(A_eq_.rows());
    qp.b_eq.head(past.u_ini.size()) = past.u_ini;
    qp.b_eq.segment(past.u_ini.size(), ns) = past.y_ini;

    constexpr double inf = std::numeric_limits<double>::infinity();
    VectorXd u_lo, u_hi, y_lo, y_hi;
    control::horizon_bounds(cfg_, u_lo, u_hi, y_lo, y_hi);
    const int n = static_cast<int>(qp.g.size());
    qp.lower = VectorXd::Constant(n, -inf);
    qp.upper = VectorXd::Constant(n, inf);
    if (reg_ == Regularizer::one_norm) qp.lower.head(ng).setZero();
    qp.lower.segment(ng + ns, nu) = u_lo;
    qp.upper.segment(ng + ns, nu) = u_hi;
    qp.lower.segment(ng + ns + nu, ny) = y_lo;
    qp.upper.segment(ng + ns + nu, ny) = y_hi;

    const optim::QpResult sol = optim::solve_qp(qp, cfg_.qp);
    if (sol.diag.status == optim::SolveStatus::infeasible)
        throw SolverError("deepc: QP infeasible (kkt residual " + std::to_string(sol.diag.kkt_residual) + ")");

    StepResult res;
    res.u_pred = sol.x.segment(ng + ns, nu);
    res.y_pred = sol.x.segment(ng + ns + nu, ny);
    res.u_apply = res.u_pred.head(cfg_.n_u());
    res.g = reg_ == Regularizer::one_norm ? VectorXd(sol.x.head(lc) - sol.x.segment(lc, lc)) : VectorXd(sol.x.head(lc));
    res.slack = sol.x.segment(ng, ns);
    res.cost = cost.value(res.u_pred, res.y_pred);
    res.objective = sol.diag.objective + cost.constant;
    res.diag = sol.diag;
    res.cpu_time_s = control::thread_cpu_seconds() - t0;
    return res;
}

}  // namespace npvdeepc::deepc
