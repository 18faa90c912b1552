#include "npvdeepc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "npvdeepc/errors.hpp"

namespace npvdeepc::plant {

void BoxConstraints::validate() const {
    if (u_lo.size() != u_hi.size() || y_lo.size() != y_hi.size())
        throw DimensionError("box constraints: lower/upper size mismatch");
    for (Eigen::Index i = 0; i < u_lo.size(); ++i)
        if (!(u_lo(i) < u_hi(i))) throw ConfigError("box constraints: input bound " + std::to_string(i) + " has lower >= upper");
    for (Eigen::Index i = 0; i < y_lo.size(); ++i)
        if (!(y_lo(i) < y_hi(i))) throw ConfigError("box constraints: output bound " + std::to_string(i) + " has lower >= upper");
}

double cem_update(double cem, double Ts, double dt_minutes) {
    if (Ts < 35.0) return cem;
    return cem + std::pow(0.5, 43.0 - Ts) * dt_minutes;
}

PlantState surrogate_step(const SurrogateParams& k, const PlantState& s, const Eigen::Vector2d& u, double d,
                          double dt, const BoxConstraints& box) {
    if (!u.allFinite() || !std::isfinite(d) || !std::isfinite(s.Ts) || !std::isfinite(s.Tg))
        throw DataError("surrogate_step: non-finite input or state");
    if (!(dt > 0.0)) throw DataError("surrogate_step: dt must be positive");
    const double P = std::clamp(u(0), box.u_lo(0), box.u_hi(0));
    const double q = std::clamp(u(1), box.u_lo(1), box.u_hi(1));
    const double dist = std::clamp(d, kMinDistance, kMaxDistance);

    const double dTg = -k.a_g * (s.Tg - k.t_amb) + k.b_g * P / (1.0 + k.c_g * q);
    const double transfer = k.b_s * std::exp(-(dist - 2.0) / k.d0) * (s.Tg - k.t_amb) * q / (q + k.q_h);
    const double dTs = -k.a_s * (s.Ts - k.t_amb) + transfer;

    PlantState next;
    next.Tg = s.Tg + dt * dTg;
    next.Ts = s.Ts + dt * dTs;
    next.cem = cem_update(s.cem, s.Ts, dt / 60.0);
    next.d = dist;
    return next;
}

Eigen::Vector2d surrogate_steady_state(const SurrogateParams& k, const Eigen::Vector2d& u, double d) {
    const double P = u(0);
    const double q = u(1);
    const double tg = k.t_amb + (k.b_g / k.a_g) * P / (1.0 + k.c_g * q);
    const double ts = k.t_amb + (k.b_s / k.a_s) * std::exp(-(d - 2.0) / k.d0) * (tg - k.t_amb) * q / (q + k.q_h);
    return {ts, tg};
}

SurrogatePlant::SurrogatePlant(SurrogateParams params, PlantState initial, double dt, BoxConstraints box)
    : params_(params), state_(initial), dt_(dt), box_(std::move(box)) {
    if (!(dt > 0.0)) throw DataError("SurrogatePlant: dt must be positive");
}

Eigen::Vector2d SurrogatePlant::step(const Eigen::Vector2d& u, double d) {
    state_ = surrogate_step(params_, state_, u, d, dt_, box_);
    return output();
}

Eigen::VectorXd lti_step(LtiPlant& plant, const Eigen::VectorXd& u) {
    if (u.size() != plant.B.cols()) throw DimensionError("lti_step: input dimension mismatch");
    Eigen::VectorXd y = plant.C * plant.x + plant.D * u;
    plant.x = plant.A * plant.x + plant.B * u;
    return y;
}

Trajectory simulate_lti(LtiPlant plant, const Eigen::MatrixXd& u, double dt) {
    Trajectory t;
    t.u = u;
    t.y.resize(plant.C.rows(), u.cols());
    t.p = Eigen::MatrixXd::Zero(1, u.cols());
    t.dt = dt;
    for (Eigen::Index k = 0; k < u.cols(); ++k) t.y.col(k) = lti_step(plant, u.col(k));
    return t;
}

void ExcitationConfig::validate() const {
    if (u_lo.size() != 2 || u_hi.size() != 2) throw ConfigError("excitation: input ranges must have 2 channels");
    for (Eigen::Index i = 0; i < 2; ++i)
        if (!(u_lo(i) < u_hi(i))) throw ConfigError("excitation: input range " + std::to_string(i) + " is empty");
    if (!(d_lo < d_hi) || d_lo < kMinDistance || d_hi > kMaxDistance)
        throw ConfigError("excitation: distance range must lie inside [2, 7] mm");
    if (u_hold_min < 1 || u_hold_max < u_hold_min) throw ConfigError("excitation: invalid input hold range");
    if (d_hold_min < 1 || d_hold_max < d_hold_min) throw ConfigError("excitation: invalid distance hold range");
}

Trajectory collect_open_loop(const SurrogateParams& params, const ExcitationConfig& ex, int n_points,
                             std::uint64_t seed, double dt) {
    ex.validate();
    if (n_points < 2) throw ConfigError("collect_open_loop: n_points must be >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> u_hold(ex.u_hold_min, ex.u_hold_max);
    std::uniform_int_distribution<int> d_hold(ex.d_hold_min, ex.d_hold_max);

    BoxConstraints box;
    box.u_lo = ex.u_lo;
    box.u_hi = ex.u_hi;

    Trajectory t;
    t.u.resize(2, n_points);
    t.y.resize(2, n_points);
    t.p.resize(1, n_points);
    t.dt = dt;

    double d = ex.d_lo + (ex.d_hi - ex.d_lo) * unit(rng);
    int d_left = d_hold(rng);
    Eigen::Vector2d u;
    int u_left = 0;

    const Eigen::Vector2d centre = 0.5 * (ex.u_lo + ex.u_hi);
    const Eigen::Vector2d ss = surrogate_steady_state(params, centre, d);
    PlantState state;
    state.Ts = ss(0);
    state.Tg = ss(1);
    state.d = d;

    for (int k = 0; k < n_points; ++k) {
        if (d_left == 0) {
            d = ex.d_lo + (ex.d_hi - ex.d_lo) * unit(rng);
            d_left = d_hold(rng);
        }
        if (u_left == 0) {
            for (int i = 0; i < 2; ++i) u(i) = ex.u_lo(i) + (ex.u_hi(i) - ex.u_lo(i)) * unit(rng);
            u_left = u_hold(rng);
        }
        t.u.col(k) = u;
        t.y.col(k) << state.Ts, state.Tg;
        t.p(0, k) = d;
        state = surrogate_step(params, state, u, d, dt, box);
        --d_left;
        --u_left;
    }
    return t;
}

Trajectory add_measurement_noise(const Trajectory& traj, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ConfigError("add_measurement_noise: sigma must be >= 0");
    Trajectory out = traj;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index k = 0; k < out.y.cols(); ++k)
        for (Eigen::Index i = 0; i < out.y.rows(); ++i) out.y(i, k) += noise(rng);
    return out;
}

}  // namespace npvdeepc::plant
