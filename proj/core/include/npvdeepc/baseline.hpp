#pragma once

#include "npvdeepc/controller.hpp"
#include "npvdeepc/hankel.hpp"

namespace npvdeepc::baseline {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// y(k) = sum_i A_i y(k - i) + sum_j B_j u(k - j) + c.
struct ArxModel {
    int na = 0;
    int nb = 0;
    std::vector<MatrixXd> A;  ///< na blocks, n_y x n_y
    std::vector<MatrixXd> B;  ///< nb blocks, n_y x n_u
    VectorXd c;               ///< intercept, zero when not identified
    double residual_rms = 0.0;

    [[nodiscard]] int n_y() const { return static_cast<int>(c.size()); }
    [[nodiscard]] int n_u() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
};

/// Least-squares fit of the one-step predictor. Throws DataError ("empty
/// regressor") for na = nb = 0 and when the regressor is rank deficient.
ArxModel identify_arx(const Trajectory& traj, int na, int nb, bool intercept = true);

/// One-step prediction from the most recent samples (columns oldest to newest).
VectorXd predict_one(const ArxModel& m, const MatrixXd& y_past, const MatrixXd& u_past);

/// Outputs y(k), ..., y(k + N - 1) for past data ending at k - 1 and future
/// inputs u(k), ..., u(k + N - 1), all stacked per sample.
VectorXd rollout(const ArxModel& m, const VectorXd& u_ini, const VectorXd& y_ini, const VectorXd& u_future);

/// y = Gamma u + f over the horizon (exact: the rollout is affine in u).
void condensed_prediction(const ArxModel& m, const VectorXd& u_ini, const VectorXd& y_ini, int horizon,
                          MatrixXd& gamma, VectorXd& f);

/// Linear MPC on an ARX model with the same cost and box as the data-driven controllers.
class MpcController final : public control::Controller {
public:
    MpcController(ArxModel model, control::ControllerConfig cfg);

    control::StepResult step(const control::PastData& past, const VectorXd& r, const VectorXd& u_prev) override;
    [[nodiscard]] std::string name() const override { return "mpc"; }
    [[nodiscard]] const ArxModel& model() const { return model_; }

private:
    ArxModel model_;
    control::ControllerConfig cfg_;
};

}  // namespace npvdeepc::baseline
