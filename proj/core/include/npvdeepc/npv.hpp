#pragma once

#include <memory>
#include <optional>

#include "npvdeepc/controller.hpp"
#include "npvdeepc/hankel.hpp"
#include "npvdeepc/hypernet.hpp"

namespace npvdeepc::npv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Data operators in the neural feature space of a trained model.
struct NeuralHankel {
    MatrixXd Phi_HL;    ///< nu_L x L_c, features of every Hankel column
    MatrixXd Yf;        ///< n_y*N x L_c
    MatrixXd M;         ///< pinv(col(Phi_HL, 1')), L_c x (nu_L + 1)
    MatrixXd Kmat;      ///< col(Phi_HL, 1') pinv(Yf), (nu_L + 1) x n_y*N
    MatrixXd theta_ls;  ///< Yf M, the least-squares output layer in physical units
    int lifted_rank = 0;
    bool yf_full_row_rank = false;
    /// Parameter vector the hidden weights were frozen at (neural mode), empty otherwise.
    VectorXd frozen_p;

    [[nodiscard]] int features() const { return static_cast<int>(Phi_HL.rows()); }
    [[nodiscard]] MatrixXd lifted() const;  ///< col(Phi_HL, 1')
};

/// Transforms every column of col(Up, Yp, Uf) into the neural space. Hidden
/// weights follow each column's parameter history, or `frozen_p` when given.
/// Throws DataError when col(Phi_HL, 1') loses full row rank.
NeuralHankel transform_hankel(const hypernet::HyperDnnModel& model, const HankelSet& hs,
                              const std::optional<VectorXd>& frozen_p = std::nullopt);

/// Mean parameter history over the Hankel columns.
VectorXd mean_parameter(const HankelSet& hs);

struct ResidualReport {
    MatrixXd E;                     ///< Yf - theta_ls col(Phi_HL, 1')
    double max_null_violation = 0;  ///< max |E g| over unit g in null(col(Phi_HL, 1'))
    int null_dim = 0;
};

ResidualReport affine_residual(const NeuralHankel& nh);

struct ProblemSize {
    int variables = 0;
    int equalities = 0;
    int inequalities = 0;  ///< finite bounds
};

enum class Mode {
    npv,     ///< hidden weights follow the measured parameter history
    neural,  ///< hidden weights frozen at NeuralHankel::frozen_p
};

/// Neural-space predictive controller:
///
///   min  J(u, y) + lambda_g |g~|^2 + lambda_sigma |s|^2
///   s.t. y = theta_ls [phi_HL(u); 1] + g~,  Kmat g~ = s,  u in U,  y in Y
///
/// solved by SQP over x = col(u, y, g~, s). Without kernel slack s is
/// dropped and Kmat g~ = 0 is enforced.
class NpvController final : public control::Controller {
public:
    NpvController(std::shared_ptr<const hypernet::HyperDnnModel> model, NeuralHankel nh,
                  control::ControllerConfig cfg, Mode mode, bool kernel_slack = true);

    control::StepResult step(const control::PastData& past, const VectorXd& r, const VectorXd& u_prev) override;
    void reset() override { warm_u_.reset(); }
    [[nodiscard]] std::string name() const override { return mode_ == Mode::npv ? "npv_deepc" : "neural_deepc"; }

    /// The NLP of one step, for inspection and derivative checks.
    [[nodiscard]] optim::NlpProblem build_problem(const control::PastData& past, const VectorXd& r,
                                                  const VectorXd& u_prev) const;
    [[nodiscard]] ProblemSize problem_size() const;
    /// theta_ls [phi_HL(u); 1] + g~ for the given past and future inputs.
    [[nodiscard]] VectorXd predict(const control::PastData& past, const VectorXd& u, const VectorXd& g_tilde) const;
    /// Initial point used for a step (shifted warm start or held input).
    [[nodiscard]] VectorXd initial_point(const control::PastData& past, const VectorXd& u_prev) const;

    [[nodiscard]] const NeuralHankel& neural_hankel() const { return nh_; }
    [[nodiscard]] const control::ControllerConfig& config() const { return cfg_; }
    void set_warm_start(bool on) { warm_start_ = on; }

    /// Layout helpers for x = col(u, y, g~, s).
    [[nodiscard]] int nu_total() const { return cfg_.n_u() * cfg_.horizon; }
    [[nodiscard]] int ny_total() const { return cfg_.n_y() * cfg_.horizon; }
    [[nodiscard]] int ns_total() const { return kernel_slack_ ? nh_.features() + 1 : 0; }
    [[nodiscard]] int num_variables() const { return nu_total() + 2 * ny_total() + ns_total(); }

    /// Objective replacing the tracking cost (used by the dose controller).
    struct Objective {
        std::function<double(const VectorXd&)> value;
        std::function<VectorXd(const VectorXd&)> gradient;
        std::function<MatrixXd(const VectorXd&)> hessian;
    };
    [[nodiscard]] optim::NlpProblem build_problem_with(const control::PastData& past, Objective objective) const;
    /// Solves the step for an arbitrary objective; fills everything except `cost`.
    control::StepResult solve(const control::PastData& past, const VectorXd& u_prev,
                              const optim::NlpProblem& problem);

private:
    hypernet::FrozenNetwork network_for(const control::PastData& past) const;
    [[nodiscard]] VectorXd u_nn(const control::PastData& past, const VectorXd& u) const;

    std::shared_ptr<const hypernet::HyperDnnModel> model_;
    NeuralHankel nh_;
    control::ControllerConfig cfg_;
    Mode mode_;
    bool kernel_slack_;
    bool warm_start_ = true;
    std::optional<VectorXd> warm_u_;
    MatrixXd theta_phi_;
    VectorXd theta_one_;
};

/// Smoothed dose switch: 0.5 logistic((Ts - 35) / 0.5). Equals 0.25 at 35 degC.
double kappa_smooth(double Ts);

/// Dose increment (minutes) of one step used inside the optimiser:
/// 2 kappa_smooth(Ts) 0.5^(43 - Ts) dt_minutes. Tends to the exact increment away from 35 degC.
double cem_increment_smooth(double Ts, double dt_minutes);
double cem_increment_smooth_derivative(double Ts, double dt_minutes);

struct CemSettings {
    double target = 0.2;            ///< CEM_T, minutes
    double terminal_weight = 1e4;   ///< scales |CEM_T - CEM(N)|^2
    double dt_minutes = 0.5 / 60.0;
    int ts_channel = 0;
};

/// Terminal-dose controller on top of an N-step neural-space predictor. The
/// input-rate term of the controller's R keeps the step well posed.
class CemController {
public:
    CemController(std::shared_ptr<NpvController> inner, CemSettings settings);

    control::StepResult step(const control::PastData& past, double cem_now, const VectorXd& u_prev);
    /// Predicted dose at the end of the horizon for predicted outputs y.
    [[nodiscard]] double predicted_cem(double cem_now, const VectorXd& y) const;
    [[nodiscard]] const CemSettings& settings() const { return settings_; }
    [[nodiscard]] NpvController& inner() { return *inner_; }

private:
    std::shared_ptr<NpvController> inner_;
    CemSettings settings_;
};

}  // namespace npvdeepc::npv
