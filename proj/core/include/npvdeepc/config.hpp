#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "npvdeepc/controller.hpp"
#include "npvdeepc/deepc.hpp"
#include "npvdeepc/hypernet.hpp"
#include "npvdeepc/npv.hpp"
#include "npvdeepc/plant.hpp"

namespace npvdeepc::config {

/// Piecewise-constant signal: value of the last breakpoint with time <= t.
struct Schedule {
    std::vector<std::pair<double, double>> points;  ///< (time s, value), times increasing, first at 0

    [[nodiscard]] double at(double t) const;
    void validate(const std::string& what) const;
};

struct ExcitationSection {
    int n_points = 4000;
    plant::ExcitationConfig signal = held_inputs();

    /// Inputs held for 1 to 10 samples per draw.
    static plant::ExcitationConfig held_inputs() {
        plant::ExcitationConfig e;
        e.u_hold_max = 10;
        return e;
    }
};

struct ModelSection {
    std::vector<int> hidden_sizes{30};
    hypernet::HyperInput hyper_input = hypernet::HyperInput::history;
    hypernet::TrainConfig train;
};

struct HankelSection {
    int deepc_points = 300;    ///< trajectory length behind the DeePC Hankel
    int neural_points = 1000;  ///< trajectory length behind the neural Hankels
};

struct CommonControl {
    int t_ini = 5;
    int horizon = 10;
    Eigen::VectorXd Q = Eigen::Vector2d(1.0, 0.0);  ///< diagonals
    Eigen::VectorXd R = Eigen::Vector2d(0.1, 0.1);
    Eigen::VectorXd P = Eigen::Vector2d(1.0, 0.0);
    plant::BoxConstraints box;
    bool output_constraints = true;
    optim::QpSettings qp;
    optim::SqpSettings sqp;
};

struct DeepcSection {
    double lambda_g = 10.0;
    double lambda_sigma = 1e5;
    deepc::Regularizer regularizer = deepc::Regularizer::projection;
};

struct NeuralSection {
    double lambda_g = 10.0;
    double lambda_sigma = 1e5;
    bool kernel_slack = true;
};

struct MpcSection {
    int na = 3;
    int nb = 3;
};

struct CemSection {
    int horizon = 5;
    double target = 0.2;  ///< minutes
    double terminal_weight = 1e4;
    Eigen::VectorXd R = Eigen::Vector2d(0.01, 0.01);
    double ts_backoff = 0.3;  ///< degC removed from the Ts upper bound inside the optimiser
    double lambda_g = 10.0;
    double lambda_sigma = 1e5;
    double duration_s = 40.0;
    double initial_ts = 33.0;
    Schedule distance{{{0.0, 3.0}, {6.0, 3.5}, {10.0, 2.5}, {15.0, 3.0}}};
    double perturb_start_s = 6.0;
    double perturb_end_s = 15.0;
};

struct ScenarioSection {
    double duration_s = 60.0;
    Schedule reference{{{0.0, 35.0}, {15.0, 37.0}, {40.0, 36.0}}};
    Schedule distance{{{0.0, 3.0}, {15.0, 4.0}, {30.0, 5.0}, {40.0, 3.5}}};
    double noise_sigma = 0.2;
    bool noise = false;  ///< noise setting of cmd_track
    double nominal_q = 2.0;  ///< flow of the steady initial input
    std::vector<double> sweep_distances{2, 3, 4, 5, 6, 7};
    /// Sweep reference as a fraction of the reachable Ts rise at each distance.
    Schedule sweep_levels{{{0.0, 0.5}, {15.0, 0.7}, {30.0, 0.6}}};
    double sweep_duration_s = 45.0;
};

struct RunConfig {
    std::uint64_t seed = 1;
    plant::SurrogateParams plant;
    double dt = 0.5;
    ExcitationSection excitation;
    ModelSection model;
    HankelSection hankel;
    CommonControl control;
    DeepcSection deepc;
    NeuralSection npv_deepc;
    NeuralSection neural_deepc;
    MpcSection mpc;
    CemSection cem;
    ScenarioSection scenario;
    std::string data_path;   ///< optional trajectory CSV to use instead of collecting
    std::string model_path;  ///< optional tracking model file to use instead of training
    std::string cem_model_path;

    /// Throws ConfigError on inconsistent values.
    void validate() const;
    /// Controller settings for the tracking controllers.
    [[nodiscard]] control::ControllerConfig controller(double lambda_g, double lambda_sigma) const;
    [[nodiscard]] hypernet::NetworkSpec network(int horizon) const;
};

/// Parses a JSON document. Unknown keys and type mismatches raise ConfigError;
/// absent keys keep their defaults.
RunConfig parse(const std::string& text);
RunConfig load(const std::string& path);
/// Fully resolved configuration as canonical JSON text.
std::string to_json(const RunConfig& cfg);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string hash(const RunConfig& cfg);

}  // namespace npvdeepc::config
