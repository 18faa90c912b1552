#include "npvdeepc/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "npvdeepc/errors.hpp"

namespace npvdeepc::baseline {

using control::ControllerConfig;
using control::PastData;
using control::StepResult;

namespace {

VectorXd regressor(const ArxModel& m, const MatrixXd& y_past, const MatrixXd& u_past, bool intercept) {
    const int ny = static_cast<int>(y_past.rows());
    const int nu = static_cast<int>(u_past.rows());
    VectorXd phi(m.na * ny + m.nb * nu + (intercept ? 1 : 0));
    int o = 0;
    for (int i = 1; i <= m.na; ++i, o += ny) phi.segment(o, ny) = y_past.col(y_past.cols() - i);
    for (int j = 1; j <= m.nb; ++j, o += nu) phi.segment(o, nu) = u_past.col(u_past.cols() - j);
    if (intercept) phi(o) = 1.0;
    return phi;
}

MatrixXd unstack(const VectorXd& v, int channels) {
    return Eigen::Map<const MatrixXd>(v.data(), channels, v.size() / channels);
}

}  // namespace

ArxModel identify_arx(const Trajectory& traj, int na, int nb, bool intercept) {
    if (na < 0 || nb < 0) throw ConfigError("identify_arx: orders must be >= 0");
    if (na == 0 && nb == 0) throw DataError("identify_arx: empty regressor (na = nb = 0)");
    traj.validate();
    const int ny = traj.n_y();
    const int nu = traj.n_u();
    const int lag = std::max(na, nb);
    const int rows = traj.length() - lag;
    ArxModel m;
    m.na = na;
    m.nb = nb;
    const int width = na * ny + nb * nu + (intercept ? 1 : 0);
    if (rows < width) throw DataError("identify_arx: trajectory too short for the regressor");

    MatrixXd phi(rows, width);
    MatrixXd target(rows, ny);
    for (int k = lag; k < traj.length(); ++k) {
        phi.row(k - lag) = regressor(m, traj.y.leftCols(k), traj.u.leftCols(k), intercept).transpose();
        target.row(k - lag) = traj.y.col(k).transpose();
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(phi);
    if (qr.rank() < width) throw DataError("identify_arx: rank-deficient regressor");
    const MatrixXd theta = qr.solve(target).transpose();  // ny x width
    m.residual_rms = std::sqrt((phi * theta.transpose() - target).squaredNorm() / static_cast<double>(target.size()));

    int o = 0;
    for (int i = 0; i < na; ++i, o += ny) m.A.push_back(theta.middleCols(o, ny));
    for (int j = 0; j < nb; ++j, o += nu) m.B.push_back(theta.middleCols(o, nu));
    m.c = intercept ? VectorXd(theta.col(o)) : VectorXd::Zero(ny);
    return m;
}

VectorXd predict_one(const ArxModel& m, const MatrixXd& y_past, const MatrixXd& u_past) {
    if (y_past.cols() < m.na || u_past.cols() < m.nb) throw DimensionError("predict_one: not enough past samples");
    VectorXd y = m.c;
    for (int i = 1; i <= m.na; ++i) y += m.A[static_cast<std::size_t>(i - 1)] * y_past.col(y_past.cols() - i);
    for (int j = 1; j <= m.nb; ++j) y += m.B[static_cast<std::size_t>(j - 1)] * u_past.col(u_past.cols() - j);
    return y;
}

VectorXd rollout(const ArxModel& m, const VectorXd& u_ini, const VectorXd& y_ini, const VectorXd& u_future) {
    const int ny = m.n_y();
    const int nu = m.n_u();
    if (nu == 0) throw DimensionError("rollout: model has no input terms");
    const MatrixXd up = unstack(u_ini, nu);
    const MatrixXd yp = unstack(y_ini, ny);
    const MatrixXd uf = unstack(u_future, nu);
    const int n = static_cast<int>(uf.cols());
    MatrixXd u_all(nu, up.cols() + n);
    u_all << up, uf;
    MatrixXd y_all(ny, yp.cols() + n);
    y_all.leftCols(yp.cols()) = yp;
    for (int i = 0; i < n; ++i) {
        const Eigen::Index k = yp.cols() + i;
        y_all.col(k) = predict_one(m, y_all.leftCols(k), u_all.leftCols(up.cols() + i));
    }
    const MatrixXd yf = y_all.rightCols(n);
    return Eigen::Map<const VectorXd>(yf.data(), yf.size());
}

void condensed_prediction(const ArxModel& m, const VectorXd& u_ini, const VectorXd& y_ini, int horizon,
                          MatrixXd& gamma, VectorXd& f) {
    const int nu = m.n_u();
    const int nuf = nu * horizon;
    const VectorXd zero = VectorXd::Zero(nuf);
    f = rollout(m, u_ini, y_ini, zero);
    gamma.resize(f.size(), nuf);
    for (int j = 0; j < nuf; ++j) {
        VectorXd e = zero;
        e(j) = 1.0;
        gamma.col(j) = rollout(m, u_ini, y_ini, e) - f;
    }
}

MpcController::MpcController(ArxModel model, ControllerConfig cfg) : model_(std::move(model)), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (model_.n_u() != cfg_.n_u() || model_.n_y() != cfg_.n_y())
        throw DimensionError("MpcController: model channels do not match the controller");
    if (cfg_.t_ini < std::max(model_.na, model_.nb))
        throw DimensionError("MpcController: T_ini is shorter than the ARX lag");
}

// Variables [u | y] with y - Gamma u = f.
StepResult MpcController::step(const PastData& past, const VectorXd& r, const VectorXd& u_prev) {
    const double t0 = control::thread_cpu_seconds();
    const int nu = cfg_.n_u() * cfg_.horizon;
    const int ny = cfg_.n_y() * cfg_.horizon;
    MatrixXd gamma;
    VectorXd f;
    condensed_prediction(model_, past.u_ini, past.y_ini, cfg_.horizon, gamma, f);
    const control::TrackingCost cost = control::tracking_cost(cfg_, r, u_prev);

    optim::QpProblem qp;
    qp.H = MatrixXd::Zero(nu + ny, nu + ny);
    qp.H.topLeftCorner(nu, nu) = cost.Huu;
    qp.H.bottomRightCorner(ny, ny) = cost.Hyy;
    qp.g.resize(nu + ny);
    qp.g << cost.gu, cost.gy;
    qp.A_eq.resize(ny, nu + ny);
    qp.A_eq << -gamma, MatrixXd::Identity(ny, ny);
    qp.b_eq = f;
    VectorXd u_lo, u_hi, y_lo, y_hi;
    control::horizon_bounds(cfg_, u_lo, u_hi, y_lo, y_hi);
    qp.lower.resize(nu + ny);
    qp.upper.resize(nu + ny);
    qp.lower << u_lo, y_lo;
    qp.upper << u_hi, y_hi;

    const optim::QpResult sol = optim::solve_qp(qp, cfg_.qp);
    if (sol.diag.status == optim::SolveStatus::infeasible)
        throw SolverError("mpc: QP infeasible (kkt residual " + std::to_string(sol.diag.kkt_residual) + ")");
    StepResult res;
    res.u_pred = sol.x.head(nu);
    res.y_pred = sol.x.tail(ny);
    res.u_apply = res.u_pred.head(cfg_.n_u());
    res.cost = cost.value(res.u_pred, res.y_pred);
    res.objective = res.cost;
    res.diag = sol.diag;
    res.cpu_time_s = control::thread_cpu_seconds() - t0;
    return res;
}

}  // namespace npvdeepc::baseline
