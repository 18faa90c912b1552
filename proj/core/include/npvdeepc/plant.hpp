#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "npvdeepc/hankel.hpp"

namespace npvdeepc::plant {

/// Constants of the two-temperature plasma-jet surrogate:
///
///   Tg+ = Tg + dt (-a_g (Tg - T_amb) + b_g P / (1 + c_g q))
///   Ts+ = Ts + dt (-a_s (Ts - T_amb) + b_s exp(-(d - 2) / d0) (Tg - T_amb) q / (q + q_h))
///
/// u = (P [W], q [slm]), y = (Ts, Tg) [degC], scheduling parameter d [mm].
struct SurrogateParams {
    double a_g = 0.3;     ///< 1/s
    double b_g = 3.0;     ///< degC / (W s)
    double c_g = 0.5;     ///< 1/slm
    double a_s = 0.15;    ///< 1/s
    double b_s = 0.3;     ///< 1/s
    double d0 = 3.0;      ///< mm
    double q_h = 2.0;     ///< slm
    double t_amb = 25.0;  ///< degC
};

struct PlantState {
    double Ts = 25.0;   ///< surface temperature, degC
    double Tg = 25.0;   ///< gas temperature, degC
    double cem = 0.0;   ///< cumulative equivalent minutes at 43 degC
    double d = 4.0;     ///< tip-to-surface distance, mm
};

inline constexpr double kMinDistance = 2.0;
inline constexpr double kMaxDistance = 7.0;

/// Per-channel box for u = (P, q) and y = (Ts, Tg). Defaults are the
/// operating limits of the jet.
struct BoxConstraints {
    Eigen::VectorXd u_lo = Eigen::Vector2d(1.5, 1.0);
    Eigen::VectorXd u_hi = Eigen::Vector2d(8.0, 6.0);
    Eigen::VectorXd y_lo = Eigen::Vector2d(25.0, 20.0);
    Eigen::VectorXd y_hi = Eigen::Vector2d(42.5, 80.0);

    void validate() const;
};

/// One explicit-Euler step. Inputs are clipped to `box`, d to [2, 7] mm.
/// The dose is accumulated from the surface temperature at the start of the step.
PlantState surrogate_step(const SurrogateParams& params, const PlantState& state, const Eigen::Vector2d& u,
                          double d, double dt, const BoxConstraints& box = {});

/// Steady state (Ts, Tg) under constant inputs; closed form of the recursion above.
Eigen::Vector2d surrogate_steady_state(const SurrogateParams& params, const Eigen::Vector2d& u, double d);

/// Thermal-dose recursion: cem + kappa^(43 - Ts) dt, kappa = 0.5 for Ts >= 35, else 0.
double cem_update(double cem, double Ts, double dt_minutes);

/// Stateful wrapper around surrogate_step.
class SurrogatePlant {
public:
    SurrogatePlant(SurrogateParams params, PlantState initial, double dt, BoxConstraints box = {});

    /// Applies u for one period at distance d and returns the new output (Ts, Tg).
    Eigen::Vector2d step(const Eigen::Vector2d& u, double d);
    [[nodiscard]] Eigen::Vector2d output() const { return {state_.Ts, state_.Tg}; }
    [[nodiscard]] const PlantState& state() const { return state_; }
    [[nodiscard]] double dt() const { return dt_; }

private:
    SurrogateParams params_;
    PlantState state_;
    double dt_;
    BoxConstraints box_;
};

/// x+ = A x + B u, y = C x + D u.
struct LtiPlant {
    Eigen::MatrixXd A, B, C, D;
    Eigen::VectorXd x;

    [[nodiscard]] int order() const { return static_cast<int>(A.rows()); }
};

/// Returns y(k) = C x(k) + D u(k) and advances x to x(k+1).
Eigen::VectorXd lti_step(LtiPlant& plant, const Eigen::VectorXd& u);

/// Simulates an LTI plant from its current state under the input columns of `u`.
Trajectory simulate_lti(LtiPlant plant, const Eigen::MatrixXd& u, double dt = 1.0);

struct ExcitationConfig {
    Eigen::VectorXd u_lo = Eigen::Vector2d(1.5, 1.0);
    Eigen::VectorXd u_hi = Eigen::Vector2d(8.0, 6.0);
    int u_hold_min = 1;  ///< steps each input draw is held
    int u_hold_max = 1;
    double d_lo = kMinDistance;
    double d_hi = kMaxDistance;
    int d_hold_min = 20;
    int d_hold_max = 100;

    void validate() const;
};

/// Open-loop excitation run: i.i.d. uniform inputs over the box and a
/// piecewise-constant distance with random hold lengths and levels. The run
/// starts from the steady state of the box-centre input. Noise free.
Trajectory collect_open_loop(const SurrogateParams& params, const ExcitationConfig& excitation, int n_points,
                             std::uint64_t seed, double dt = 0.5);

/// Adds zero-mean Gaussian noise of standard deviation sigma to every output channel.
Trajectory add_measurement_noise(const Trajectory& traj, double sigma, std::uint64_t seed);

}  // namespace npvdeepc::plant
