#include "npvdeepc/controller.hpp"

#include <ctime>
#include <limits>

#include "npvdeepc/errors.hpp"

namespace npvdeepc::control {

namespace {

bool is_psd(const MatrixXd& m, double floor) {
    if (!m.isApprox(m.transpose(), 1e-12)) return false;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > floor;
}

}  // namespace

void ControllerConfig::validate() const {
    if (horizon < 1 || t_ini < 1) throw ConfigError("controller: horizon and T_ini must be >= 1");
    if (Q.rows() != Q.cols() || P.rows() != Q.rows() || P.cols() != Q.cols())
        throw ConfigError("controller: Q and P must be square with matching size");
    if (R.rows() != R.cols()) throw ConfigError("controller: R must be square");
    if (!is_psd(Q, -1e-12) || !is_psd(P, -1e-12)) throw ConfigError("controller: Q and P must be symmetric PSD");
    if (!is_psd(R, 0.0)) throw ConfigError("controller: R must be symmetric positive definite");
    if (!(lambda_g >= 0.0) || !(lambda_sigma >= 0.0)) throw ConfigError("controller: penalty weights must be >= 0");
    box.validate();
    if (box.u_lo.size() != n_u() || box.y_lo.size() != n_y())
        throw ConfigError("controller: box dimensions do not match the weights");
}

double TrackingCost::value(const VectorXd& u, const VectorXd& y) const {
    return 0.5 * u.dot(Huu * u) + gu.dot(u) + 0.5 * y.dot(Hyy * y) + gy.dot(y) + constant;
}

TrackingCost tracking_cost(const ControllerConfig& cfg, const VectorXd& r, const VectorXd& u_prev) {
    const int nu = cfg.n_u();
    const int ny = cfg.n_y();
    const int n = cfg.horizon;
    if (r.size() != ny) throw DimensionError("tracking_cost: reference has wrong length");
    if (u_prev.size() != nu) throw DimensionError("tracking_cost: previous input has wrong length");

    TrackingCost c;
    c.Hyy = MatrixXd::Zero(ny * n, ny * n);
    c.gy = VectorXd::Zero(ny * n);
    for (int i = 0; i < n; ++i) {
        const MatrixXd w = i == n - 1 ? MatrixXd(cfg.Q + cfg.P) : cfg.Q;
        c.Hyy.block(i * ny, i * ny, ny, ny) = 2.0 * w;
        c.gy.segment(i * ny, ny) = -2.0 * w * r;
        c.constant += r.dot(w * r);
    }

    // du = D u - e with e = col(u_prev, 0, ..., 0).
    MatrixXd D = MatrixXd::Identity(nu * n, nu * n);
    for (int i = 1; i < n; ++i) D.block(i * nu, (i - 1) * nu, nu, nu) = -MatrixXd::Identity(nu, nu);
    MatrixXd Rbar = MatrixXd::Zero(nu * n, nu * n);
    for (int i = 0; i < n; ++i) Rbar.block(i * nu, i * nu, nu, nu) = cfg.R;
    VectorXd e = VectorXd::Zero(nu * n);
    e.head(nu) = u_prev;
    c.Huu = 2.0 * D.transpose() * Rbar * D;
    c.gu = -2.0 * D.transpose() * Rbar * e;
    c.constant += e.dot(Rbar * e);
    return c;
}

VectorXd repeat(const VectorXd& v, int times) {
    VectorXd out(v.size() * times);
    for (int i = 0; i < times; ++i) out.segment(i * v.size(), v.size()) = v;
    return out;
}

void horizon_bounds(const ControllerConfig& cfg, VectorXd& u_lo, VectorXd& u_hi, VectorXd& y_lo, VectorXd& y_hi) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    u_lo = repeat(cfg.box.u_lo, cfg.horizon);
    u_hi = repeat(cfg.box.u_hi, cfg.horizon);
    if (cfg.output_constraints) {
        y_lo = repeat(cfg.box.y_lo, cfg.horizon);
        y_hi = repeat(cfg.box.y_hi, cfg.horizon);
    } else {
        y_lo = VectorXd::Constant(cfg.n_y() * cfg.horizon, -inf);
        y_hi = VectorXd::Constant(cfg.n_y() * cfg.horizon, inf);
    }
}

double thread_cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

}  // namespace npvdeepc::control
