#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "npvdeepc/config.hpp"
#include "npvdeepc/controller.hpp"
#include "npvdeepc/hankel.hpp"
#include "npvdeepc/hypernet.hpp"
#include "npvdeepc/metrics.hpp"
#include "npvdeepc/npv.hpp"

namespace npvdeepc::experiment {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ControllerKind { npv_deepc, neural_deepc, deepc, mpc };

std::string to_string(ControllerKind k);
ControllerKind controller_from_string(const std::string& name);
/// In table order: npv_deepc, neural_deepc, deepc, mpc.
std::vector<ControllerKind> all_controllers();

/// Open-loop excitation data for the configured plant and seed.
Trajectory collect(const config::RunConfig& cfg);

/// Hankel set of the full training trajectory for a given horizon.
HankelSet training_hankel(const config::RunConfig& cfg, const Trajectory& data, int horizon);

/// Trains the hyper network for `horizon` on the whole trajectory.
hypernet::HyperDnnModel train_model(const config::RunConfig& cfg, const Trajectory& data, int horizon);

struct ModelReport {
    double train_bfr = 0.0;       ///< percent, non-overlapping windows of the training part
    double validation_bfr = 0.0;  ///< percent, non-overlapping windows of the held-out part
    int epochs = 0;
    int best_epoch = -1;
};

/// BFR of the multi-step predictor on the train/validation split used for training.
ModelReport evaluate_model(const hypernet::HyperDnnModel& model, const config::RunConfig& cfg, const Trajectory& data);

/// Data and models shared by the closed-loop commands.
struct Setup {
    config::RunConfig cfg;
    Trajectory data;
    std::shared_ptr<const hypernet::HyperDnnModel> model;      ///< N = control.horizon
    std::shared_ptr<const hypernet::HyperDnnModel> cem_model;  ///< N = cem.horizon, may be null
};

/// Loads data and models from the configured paths, collecting and training what is missing.
Setup prepare(const config::RunConfig& cfg, bool need_cem_model);

std::unique_ptr<control::Controller> make_controller(ControllerKind kind, const Setup& setup);
std::shared_ptr<npv::CemController> make_cem_controller(ControllerKind kind, const Setup& setup);

/// Constant input whose steady surface temperature is `ts` at distance d with flow q
/// (clipped to the input box when out of reach).
Eigen::Vector2d steady_input(const plant::SurrogateParams& params, const plant::BoxConstraints& box, double ts,
                             double d, double q);

/// Largest steady Ts rise over the input box at distance d.
double max_steady_rise(const plant::SurrogateParams& params, const plant::BoxConstraints& box, double d);

struct LoopLog {
    std::string controller;
    double dt = 0.5;
    int t_ini = 0;
    MatrixXd u;       ///< applied inputs, 2 x n
    MatrixXd y_true;  ///< plant outputs, 2 x n
    MatrixXd y_meas;  ///< measured outputs, 2 x n
    VectorXd r;       ///< Ts reference
    VectorXd d;
    VectorXd cem;     ///< dose at the start of each sample
    std::vector<double> cpu_s;           ///< per control step
    std::vector<std::string> status;     ///< per control step
    std::vector<double> kkt;             ///< per control step
    std::vector<int> iterations;         ///< per control step
    int input_violations = 0;
    double max_output_violation = 0.0;   ///< degC beyond the output box, >= 0

    [[nodiscard]] int length() const { return static_cast<int>(u.cols()); }
};

using Signal = std::function<double(double t)>;

/// Closed-loop tracking run. The plant starts at the steady state that puts
/// Ts on the first reference value; the first T_ini samples hold that input.
LoopLog run_tracking(control::Controller& ctrl, const config::RunConfig& cfg, const Signal& reference,
                     const Signal& distance, double duration_s, double noise_sigma, std::uint64_t noise_seed);

/// Closed-loop thermal-dose run of the terminal-cost controller.
LoopLog run_cem(npv::CemController& ctrl, const config::RunConfig& cfg, double noise_sigma, std::uint64_t noise_seed);

/// RMSE / ISE / control energy on the Ts channel of the true output, k = T_ini .. n - 1.
metrics::RunMetrics score(const LoopLog& log, bool noisy);

struct CemReport {
    double final_cem = 0.0;
    bool monotone = true;
    bool overshoot = false;  ///< final dose above target + 0.1 min
    bool reached = false;    ///< final dose at or above target
    double rate_median = 0.0;
    double rate_max_deviation = 0.0;  ///< max |rate / median - 1| inside the perturbation window
};

CemReport analyse_cem(const LoopLog& log, const config::CemSection& cem);

/// Per-step CSV without timing columns (deterministic).
std::string loop_csv(const LoopLog& log);
/// Per-step solve times.
std::string timing_csv(const LoopLog& log);

// ---------------------------------------------------------------------------
// Commands. Each writes its files into `out_dir` and returns a summary JSON.
// ---------------------------------------------------------------------------

std::string cmd_collect(const config::RunConfig& cfg, const std::string& out_dir);
std::string cmd_train(const config::RunConfig& cfg, const std::string& out_dir);
/// Returns the verification report; `passed` reports whether every check held.
std::string cmd_verify(const config::RunConfig& cfg, const std::string& out_dir, bool& passed);
std::string cmd_track(const config::RunConfig& cfg, const std::string& out_dir,
                      const std::vector<ControllerKind>& kinds = all_controllers());
std::string cmd_cem(const config::RunConfig& cfg, const std::string& out_dir);
std::string cmd_bench(const config::RunConfig& cfg, const std::string& out_dir);
std::string cmd_sweep(const config::RunConfig& cfg, const std::string& out_dir);

/// Runs the bench on a prepared setup. Rows: controllers x {noise free, noisy}.
std::vector<metrics::RunMetrics> bench(const Setup& setup, std::vector<LoopLog>* logs = nullptr);

struct SweepRow {
    double distance = 0.0;
    std::string controller;
    double rmse = 0.0;
};
std::vector<SweepRow> sweep(const Setup& setup, std::vector<LoopLog>* logs = nullptr);

}  // namespace npvdeepc::experiment
