#pragma once

#include <string>

#include <Eigen/Dense>

#include "npvdeepc/optim.hpp"
#include "npvdeepc/plant.hpp"

namespace npvdeepc::control {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Settings shared by every receding-horizon controller.
struct ControllerConfig {
    int horizon = 10;
    int t_ini = 5;
    MatrixXd Q = Eigen::Vector2d(1.0, 0.0).asDiagonal();
    MatrixXd R = Eigen::Vector2d(0.1, 0.1).asDiagonal();
    MatrixXd P = Eigen::Vector2d(1.0, 0.0).asDiagonal();  ///< extra weight on the last predicted output
    double lambda_g = 10.0;
    double lambda_sigma = 1e5;
    plant::BoxConstraints box;
    bool output_constraints = true;
    optim::QpSettings qp;
    optim::SqpSettings sqp;

    [[nodiscard]] int n_u() const { return static_cast<int>(R.rows()); }
    [[nodiscard]] int n_y() const { return static_cast<int>(Q.rows()); }
    /// Throws ConfigError on inconsistent shapes or weights that are not PSD (R: PD).
    void validate() const;
};

/// Measured past used by one control step.
struct PastData {
    VectorXd u_ini;   ///< n_u*T_ini
    VectorXd y_ini;   ///< n_y*T_ini
    VectorXd p_hist;  ///< n_p*T_ini
};

struct StepResult {
    VectorXd u_apply;
    VectorXd u_pred;   ///< n_u*N
    VectorXd y_pred;   ///< n_y*N
    double cost = 0.0;       ///< tracking cost J(u, y) (or the terminal cost for dose control)
    double objective = 0.0;  ///< J plus regularisation terms
    VectorXd g;              ///< combination vector (g for DeePC, g~ for the neural controllers)
    VectorXd slack;
    optim::SolveDiagnostics diag;
    double cpu_time_s = 0.0;  ///< thread CPU time of the solve
};

class Controller {
public:
    virtual ~Controller() = default;
    /// Optimises the horizon for reference r (n_y) given the previous input.
    virtual StepResult step(const PastData& past, const VectorXd& r, const VectorXd& u_prev) = 0;
    /// Drops warm-start state.
    virtual void reset() {}
    [[nodiscard]] virtual std::string name() const = 0;
};

/// J(u, y) = sum_i |y_i - r|_Q^2 + |y_{N-1} - r|_P^2 + sum_i |u_i - u_{i-1}|_R^2
/// with u_{-1} = u_prev, written as 1/2 x'Hx + g'x + c in the stacked u and y.
struct TrackingCost {
    MatrixXd Huu, Hyy;
    VectorXd gu, gy;
    double constant = 0.0;

    [[nodiscard]] double value(const VectorXd& u, const VectorXd& y) const;
};

TrackingCost tracking_cost(const ControllerConfig& cfg, const VectorXd& r, const VectorXd& u_prev);

/// col(v, ..., v) with `times` copies.
VectorXd repeat(const VectorXd& v, int times);

/// Input and output bounds for one horizon (outputs unbounded when disabled).
void horizon_bounds(const ControllerConfig& cfg, VectorXd& u_lo, VectorXd& u_hi, VectorXd& y_lo, VectorXd& y_hi);

/// CPU time consumed by the calling thread, seconds.
double thread_cpu_seconds();

}  // namespace npvdeepc::control
