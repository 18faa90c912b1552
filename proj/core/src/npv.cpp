#include "npvdeepc/npv.hpp"

#include <cmath>
#include <limits>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc::npv {

using control::ControllerConfig;
using control::PastData;
using control::StepResult;

MatrixXd NeuralHankel::lifted() const {
    MatrixXd l(Phi_HL.rows() + 1, Phi_HL.cols());
    l << Phi_HL, MatrixXd::Ones(1, Phi_HL.cols());
    return l;
}

VectorXd mean_parameter(const HankelSet& hs) {
    if (hs.Pp.cols() == 0) throw DimensionError("mean_parameter: empty Hankel set");
    const double m = hs.Pp.mean();
    return VectorXd::Constant(hs.Pp.rows(), m);
}

NeuralHankel transform_hankel(const hypernet::HyperDnnModel& model, const HankelSet& hs,
                              const std::optional<VectorXd>& frozen_p) {
    if (hs.cols() == 0) throw DimensionError("transform_hankel: empty Hankel set");
    if (hs.t_ini != model.dims.t_ini || hs.horizon != model.dims.horizon)
        throw DimensionError("transform_hankel: Hankel horizons do not match the model");
    NeuralHankel nh;
    if (frozen_p) {
        nh.frozen_p = *frozen_p;
        nh.Phi_HL = hypernet::FrozenNetwork(model, *frozen_p).features_batch(hs.past_and_future_inputs());
    } else {
        nh.Phi_HL = hypernet::phi_hl_columns(model, hs);
    }
    nh.Yf = hs.Yf;
    const MatrixXd lifted = nh.lifted();
    nh.lifted_rank = optim::numerical_rank(lifted);
    if (nh.lifted_rank < lifted.rows())
        throw DataError("neural Hankel rank deficient: enrich data or reduce nu_L (rank " +
                        std::to_string(nh.lifted_rank) + " < " + std::to_string(lifted.rows()) + ")");
    nh.M = optim::pinv(lifted);
    nh.theta_ls = nh.Yf * nh.M;
    nh.yf_full_row_rank = optim::numerical_rank(nh.Yf) == nh.Yf.rows();
    nh.Kmat = lifted * optim::pinv(nh.Yf);
    return nh;
}

ResidualReport affine_residual(const NeuralHankel& nh) {
    ResidualReport rep;
    const MatrixXd lifted = nh.lifted();
    rep.E = nh.Yf - nh.theta_ls * lifted;
    const MatrixXd basis = optim::null_space(lifted);
    rep.null_dim = static_cast<int>(basis.cols());
    if (rep.null_dim == 0) return rep;
    const MatrixXd eg = rep.E * basis;
    Eigen::BDCSVD<MatrixXd> svd(eg);
    rep.max_null_violation = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// NpvController
// ---------------------------------------------------------------------------

NpvController::NpvController(std::shared_ptr<const hypernet::HyperDnnModel> model, NeuralHankel nh,
                             ControllerConfig cfg, Mode mode, bool kernel_slack)
    : model_(std::move(model)), nh_(std::move(nh)), cfg_(std::move(cfg)), mode_(mode), kernel_slack_(kernel_slack) {
    if (!model_) throw DimensionError("NpvController: null model");
    cfg_.validate();
    const auto& d = model_->dims;
    if (d.horizon != cfg_.horizon || d.t_ini != cfg_.t_ini || d.n_u != cfg_.n_u() || d.n_y != cfg_.n_y())
        throw DimensionError("NpvController: model dimensions do not match the controller");
    if (nh_.features() != model_->feature_size() || nh_.theta_ls.rows() != ny_total())
        throw DimensionError("NpvController: neural Hankel does not match the model");
    if (mode_ == Mode::neural && nh_.frozen_p.size() != d.p_vec_size())
        throw DimensionError("NpvController: neural mode needs a Hankel built with a frozen parameter");
    theta_phi_ = nh_.theta_ls.leftCols(nh_.features());
    theta_one_ = nh_.theta_ls.col(nh_.features());
}

hypernet::FrozenNetwork NpvController::network_for(const PastData& past) const {
    if (mode_ == Mode::neural) return hypernet::FrozenNetwork(*model_, nh_.frozen_p);
    return hypernet::FrozenNetwork(*model_, past.p_hist);
}

VectorXd NpvController::u_nn(const PastData& past, const VectorXd& u) const {
    VectorXd v(past.u_ini.size() + past.y_ini.size() + u.size());
    v << past.u_ini, past.y_ini, u;
    return v;
}

VectorXd NpvController::predict(const PastData& past, const VectorXd& u, const VectorXd& g_tilde) const {
    const VectorXd phi = network_for(past).features(u_nn(past, u));
    return theta_phi_ * phi + theta_one_ + g_tilde;
}

ProblemSize NpvController::problem_size() const {
    PastData past;
    past.u_ini = VectorXd::Zero(cfg_.n_u() * cfg_.t_ini);
    past.y_ini = VectorXd::Zero(cfg_.n_y() * cfg_.t_ini);
    past.p_hist = VectorXd::Zero(model_->dims.p_vec_size());
    const optim::NlpProblem p = build_problem(past, VectorXd::Zero(cfg_.n_y()), VectorXd::Zero(cfg_.n_u()));
    ProblemSize s;
    s.variables = p.num_variables;
    s.equalities = p.num_equalities;
    for (Eigen::Index i = 0; i < p.lower.size(); ++i) {
        s.inequalities += std::isfinite(p.lower(i)) ? 1 : 0;
        s.inequalities += std::isfinite(p.upper(i)) ? 1 : 0;
    }
    return s;
}

optim::NlpProblem NpvController::build_problem(const PastData& past, const VectorXd& r,
                                               const VectorXd& u_prev) const {
    const control::TrackingCost cost = control::tracking_cost(cfg_, r, u_prev);
    const int nu = nu_total();
    const int ny = ny_total();
    const int ns = ns_total();
    const double lg = cfg_.lambda_g;
    const double ls = cfg_.lambda_sigma;
    Objective obj;
    obj.value = [=](const VectorXd& x) {
        return cost.value(x.head(nu), x.segment(nu, ny)) + lg * x.segment(nu + ny, ny).squaredNorm() +
               ls * x.tail(ns).squaredNorm();
    };
    obj.gradient = [=](const VectorXd& x) {
        VectorXd g(x.size());
        g.head(nu) = cost.Huu * x.head(nu) + cost.gu;
        g.segment(nu, ny) = cost.Hyy * x.segment(nu, ny) + cost.gy;
        g.segment(nu + ny, ny) = 2.0 * lg * x.segment(nu + ny, ny);
        g.tail(ns) = 2.0 * ls * x.tail(ns);
        return g;
    };
    MatrixXd h = MatrixXd::Zero(num_variables(), num_variables());
    h.topLeftCorner(nu, nu) = cost.Huu;
    h.block(nu, nu, ny, ny) = cost.Hyy;
    h.block(nu + ny, nu + ny, ny, ny) = 2.0 * lg * MatrixXd::Identity(ny, ny);
    h.bottomRightCorner(ns, ns) = 2.0 * ls * MatrixXd::Identity(ns, ns);
    obj.hessian = [h](const VectorXd&) { return h; };
    return build_problem_with(past, std::move(obj));
}

optim::NlpProblem NpvController::build_problem_with(const PastData& past, Objective objective) const {
    const auto& d = model_->dims;
    if (past.u_ini.size() != d.n_u * d.t_ini || past.y_ini.size() != d.n_y * d.t_ini)
        throw DimensionError("NpvController: past window length does not match T_ini");
    if (mode_ == Mode::npv && past.p_hist.size() != d.p_vec_size())
        throw DimensionError("NpvController: parameter history has wrong length");

    const int nu = nu_total();
    const int ny = ny_total();
    const int ns = ns_total();
    const int nk = nh_.features() + 1;
    const int n = num_variables();

    optim::NlpProblem p;
    p.num_variables = n;
    p.num_equalities = ny + nk;
    p.objective = std::move(objective.value);
    p.gradient = std::move(objective.gradient);
    p.hessian = std::move(objective.hessian);

    const auto net = std::make_shared<hypernet::FrozenNetwork>(network_for(past));
    const VectorXd head = u_nn(past, VectorXd::Zero(nu)).head(d.future_offset());
    const MatrixXd theta_phi = theta_phi_;
    const VectorXd theta_one = theta_one_;
    const MatrixXd kmat = nh_.Kmat;
    const auto model = model_;  // keeps the network's model alive

    auto full_input = [head, nu](const VectorXd& x) {
        VectorXd v(head.size() + nu);
        v << head, x.head(nu);
        return v;
    };
    p.constraints = [=](const VectorXd& x) {
        (void)model;
        VectorXd c(ny + nk);
        c.head(ny) = x.segment(nu, ny) - theta_phi * net->features(full_input(x)) - theta_one - x.segment(nu + ny, ny);
        c.tail(nk) = kmat * x.segment(nu + ny, ny);
        if (ns > 0) c.tail(nk) -= x.tail(ns);
        return c;
    };
    p.constraint_jacobian = [=](const VectorXd& x) {
        MatrixXd j = MatrixXd::Zero(ny + nk, n);
        j.topLeftCorner(ny, nu) = -theta_phi * net->jacobian_future_inputs(full_input(x));
        j.block(0, nu, ny, ny) = MatrixXd::Identity(ny, ny);
        j.block(0, nu + ny, ny, ny) = -MatrixXd::Identity(ny, ny);
        j.block(ny, nu + ny, nk, ny) = kmat;
        if (ns > 0) j.bottomRightCorner(nk, ns) = -MatrixXd::Identity(nk, ns);
        return j;
    };

    // c_y = y - Theta phi(u) - ...: only the network term is curved.
    p.constraint_curvature = [=](const VectorXd& x, const VectorXd& lambda) {
        MatrixXd h = MatrixXd::Zero(n, n);
        h.topLeftCorner(nu, nu) = -net->hessian_future_inputs(full_input(x), theta_phi.transpose() * lambda.head(ny));
        return h;
    };

    constexpr double inf = std::numeric_limits<double>::infinity();
    VectorXd u_lo, u_hi, y_lo, y_hi;
    control::horizon_bounds(cfg_, u_lo, u_hi, y_lo, y_hi);
    p.lower = VectorXd::Constant(n, -inf);
    p.upper = VectorXd::Constant(n, inf);
    p.lower.head(nu) = u_lo;
    p.upper.head(nu) = u_hi;
    p.lower.segment(nu, ny) = y_lo;
    p.upper.segment(nu, ny) = y_hi;
    return p;
}

VectorXd NpvController::initial_point(const PastData& past, const VectorXd& u_prev) const {
    const int nu = nu_total();
    const int ny = ny_total();
    const int m = cfg_.n_u();
    VectorXd u(nu);
    if (warm_start_ && warm_u_ && warm_u_->size() == nu) {
        u.head(nu - m) = warm_u_->tail(nu - m);
        u.tail(m) = warm_u_->tail(m);
    } else {
        u = control::repeat(u_prev, cfg_.horizon);
    }
    u = u.cwiseMax(control::repeat(cfg_.box.u_lo, cfg_.horizon)).cwiseMin(control::repeat(cfg_.box.u_hi, cfg_.horizon));
    VectorXd x = VectorXd::Zero(num_variables());
    x.head(nu) = u;
    x.segment(nu, ny) = predict(past, u, VectorXd::Zero(ny));
    return x;
}

StepResult NpvController::solve(const PastData& past, const VectorXd& u_prev, const optim::NlpProblem& problem) {
    const double t0 = control::thread_cpu_seconds();
    const int nu = nu_total();
    const int ny = ny_total();
    const VectorXd x0 = initial_point(past, u_prev);
    const optim::SqpResult sol = optim::solve_sqp(problem, x0, cfg_.sqp);

    StepResult res;
    res.u_pred = sol.x.head(nu);
    res.g = sol.x.segment(nu + ny, ny);
    res.slack = sol.x.tail(ns_total());
    res.y_pred = predict(past, res.u_pred, res.g);
    res.u_apply = res.u_pred.head(cfg_.n_u());
    res.objective = problem.objective(sol.x);
    res.diag = sol.diag;
    warm_u_ = res.u_pred;
    res.cpu_time_s = control::thread_cpu_seconds() - t0;
    return res;
}

StepResult NpvController::step(const PastData& past, const VectorXd& r, const VectorXd& u_prev) {
    const double t0 = control::thread_cpu_seconds();
    const optim::NlpProblem problem = build_problem(past, r, u_prev);
    StepResult res = solve(past, u_prev, problem);
    res.cost = control::tracking_cost(cfg_, r, u_prev).value(res.u_pred, res.y_pred);
    res.cpu_time_s = control::thread_cpu_seconds() - t0;
    return res;
}

// ---------------------------------------------------------------------------
// Thermal dose
// ---------------------------------------------------------------------------

namespace {

constexpr double kSwitchTemp = 35.0;
constexpr double kSwitchWidth = 0.5;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double kappa_smooth(double Ts) { return 0.5 * logistic((Ts - kSwitchTemp) / kSwitchWidth); }

double cem_increment_smooth(double Ts, double dt_minutes) {
    return 2.0 * kappa_smooth(Ts) * std::pow(0.5, 43.0 - Ts) * dt_minutes;
}

double cem_increment_smooth_derivative(double Ts, double dt_minutes) {
    const double s = logistic((Ts - kSwitchTemp) / kSwitchWidth);
    const double base = std::pow(0.5, 43.0 - Ts);
    return dt_minutes * base * (s * (1.0 - s) / kSwitchWidth + s * std::log(2.0));
}

CemController::CemController(std::shared_ptr<NpvController> inner, CemSettings settings)
    : inner_(std::move(inner)), settings_(settings) {
    if (!inner_) throw DimensionError("CemController: null inner controller");
    if (!(settings_.target > 0.0)) throw ConfigError("cem: target must be positive");
    if (!(settings_.terminal_weight > 0.0)) throw ConfigError("cem: terminal_weight must be positive");
    if (!(settings_.dt_minutes > 0.0)) throw ConfigError("cem: dt_minutes must be positive");
    if (settings_.ts_channel < 0 || settings_.ts_channel >= inner_->config().n_y())
        throw ConfigError("cem: ts_channel out of range");
}

double CemController::predicted_cem(double cem_now, const VectorXd& y) const {
    const int ny = inner_->config().n_y();
    double cem = cem_now;
    for (Eigen::Index i = settings_.ts_channel; i < y.size(); i += ny)
        cem += cem_increment_smooth(y(i), settings_.dt_minutes);
    return cem;
}

StepResult CemController::step(const PastData& past, double cem_now, const VectorXd& u_prev) {
    const double t0 = control::thread_cpu_seconds();
    const ControllerConfig& cfg = inner_->config();
    ControllerConfig rate_only = cfg;
    rate_only.Q.setZero();
    rate_only.P.setZero();
    const control::TrackingCost rate = control::tracking_cost(rate_only, VectorXd::Zero(cfg.n_y()), u_prev);

    const int nu = inner_->nu_total();
    const int ny = inner_->ny_total();
    const int ns = inner_->ns_total();
    const int n = inner_->num_variables();
    const int n_y = cfg.n_y();
    const double lg = cfg.lambda_g;
    const double ls = cfg.lambda_sigma;
    const CemSettings st = settings_;

    auto residual = [=](const VectorXd& x) {
        double cem = cem_now;
        for (int i = st.ts_channel; i < ny; i += n_y) cem += cem_increment_smooth(x(nu + i), st.dt_minutes);
        return st.target - cem;
    };
    auto residual_grad = [=](const VectorXd& x) {
        VectorXd a = VectorXd::Zero(ny);
        for (int i = st.ts_channel; i < ny; i += n_y) a(i) = -cem_increment_smooth_derivative(x(nu + i), st.dt_minutes);
        return a;
    };

    NpvController::Objective obj;
    obj.value = [=](const VectorXd& x) {
        const double rho = residual(x);
        return st.terminal_weight * rho * rho + 0.5 * x.head(nu).dot(rate.Huu * x.head(nu)) + rate.gu.dot(x.head(nu)) +
               rate.constant + lg * x.segment(nu + ny, ny).squaredNorm() + ls * x.tail(ns).squaredNorm();
    };
    obj.gradient = [=](const VectorXd& x) {
        VectorXd g = VectorXd::Zero(n);
        g.head(nu) = rate.Huu * x.head(nu) + rate.gu;
        g.segment(nu, ny) = 2.0 * st.terminal_weight * residual(x) * residual_grad(x);
        g.segment(nu + ny, ny) = 2.0 * lg * x.segment(nu + ny, ny);
        g.tail(ns) = 2.0 * ls * x.tail(ns);
        return g;
    };
    obj.hessian = [=](const VectorXd& x) {
        MatrixXd h = MatrixXd::Zero(n, n);
        const VectorXd a = residual_grad(x);
        h.topLeftCorner(nu, nu) = rate.Huu;
        h.block(nu, nu, ny, ny) = 2.0 * st.terminal_weight * a * a.transpose();
        h.block(nu + ny, nu + ny, ny, ny) = 2.0 * lg * MatrixXd::Identity(ny, ny);
        h.bottomRightCorner(ns, ns) = 2.0 * ls * MatrixXd::Identity(ns, ns);
        return h;
    };

    const optim::NlpProblem problem = inner_->build_problem_with(past, std::move(obj));
    StepResult res = inner_->solve(past, u_prev, problem);
    const double rho = settings_.target - predicted_cem(cem_now, res.y_pred);
    res.cost = rho * rho;
    res.cpu_time_s = control::thread_cpu_seconds() - t0;
    return res;
}

}  // namespace npvdeepc::npv
