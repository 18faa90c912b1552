#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npvdeepc/hankel.hpp"

namespace npvdeepc::hypernet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-channel min-max map onto [-1, 1].
struct Scaler {
    VectorXd lo;
    VectorXd hi;

    /// Fits on the rows of `data` (channels x samples). Throws DataError
    /// ("degenerate channel") when a channel is constant.
    static Scaler fit(const MatrixXd& data);

    [[nodiscard]] int channels() const { return static_cast<int>(lo.size()); }
    /// Entry i of `stacked` belongs to channel i % channels().
    [[nodiscard]] VectorXd normalize(const VectorXd& stacked) const;
    [[nodiscard]] VectorXd denormalize(const VectorXd& stacked) const;
    [[nodiscard]] MatrixXd normalize_rows(const MatrixXd& stacked_cols) const;
    [[nodiscard]] MatrixXd denormalize_rows(const MatrixXd& stacked_cols) const;
    /// d(normalized)/d(raw) for each stacked entry.
    [[nodiscard]] VectorXd gain(Eigen::Index stacked_size) const;
};

struct ChannelScalers {
    Scaler u;
    Scaler y;
    Scaler p;
};

enum class HyperInput {
    history,  ///< stacked past parameters, n_p * T_ini entries
    current,  ///< most recent parameter only, n_p entries
};

struct ModelDims {
    int t_ini = 5;
    int horizon = 10;
    int n_u = 2;
    int n_y = 2;
    int n_p = 1;
    HyperInput hyper_input = HyperInput::history;

    [[nodiscard]] int nn_input_size() const { return (n_u + n_y) * t_ini + n_u * horizon; }
    [[nodiscard]] int nn_output_size() const { return n_y * horizon; }
    [[nodiscard]] int p_vec_size() const { return n_p * t_ini; }
    [[nodiscard]] int hyper_input_size() const { return hyper_input == HyperInput::history ? n_p * t_ini : n_p; }
    /// Offset of the future-input slice inside u_NN.
    [[nodiscard]] int future_offset() const { return (n_u + n_y) * t_ini; }
};

/// Hidden layer parameters. A modulated layer stores the affine hypernet map
/// p -> [W(p) b(p)] as column blocks G = [G_0 G_1 ... G_m], each block
/// (out x (in + 1)) with its bias in the last column, so that
/// [W(p) b(p)] = G_0 + sum_j pi_j G_j with pi the normalized hypernet input.
/// A fixed layer has a single block.
struct HiddenLayer {
    int in = 0;
    int out = 0;
    bool modulated = true;
    MatrixXd G;

    [[nodiscard]] int blocks() const { return static_cast<int>(G.cols()) / (in + 1); }
};

struct LossHistory {
    std::vector<double> train_mse;
    std::vector<double> validation_mse;
    int best_epoch = -1;
};

/// Hypernetwork-modulated target network. Parameters live in normalized
/// coordinates; every public evaluation takes and returns physical units.
struct HyperDnnModel {
    ModelDims dims;
    std::vector<HiddenLayer> layers;
    MatrixXd W_o;  ///< nu_y x nu_L
    VectorXd b_o;  ///< nu_y
    ChannelScalers scalers;
    LossHistory history;

    [[nodiscard]] int feature_size() const { return layers.empty() ? 0 : layers.back().out; }
    [[nodiscard]] std::vector<int> layer_sizes() const;
    void validate() const;
};

/// Network inputs stacked as u_NN = col(u_ini, y_ini, u) and p = col(p(k - T_ini), ..., p(k - 1)).
struct NnInput {
    VectorXd u_nn;
    VectorXd p_vec;
};

NnInput make_nn_input(const Window& w);

struct LayerParams {
    MatrixXd W;
    VectorXd b;
};

/// Hidden-layer weights for the physical parameter vector (affine in p_vec).
std::vector<LayerParams> hyper_forward(const HyperDnnModel& model, const VectorXd& p_vec);

/// Target network with hidden weights frozen for one parameter vector.
class FrozenNetwork {
public:
    FrozenNetwork(const HyperDnnModel& model, const VectorXd& p_vec);
    FrozenNetwork(const HyperDnnModel& model, std::vector<LayerParams> params);

    /// Last hidden layer activations for a physical u_NN.
    [[nodiscard]] VectorXd features(const VectorXd& u_nn) const;
    /// Features for many physical u_NN columns.
    [[nodiscard]] MatrixXd features_batch(const MatrixXd& u_nn_cols) const;
    /// d features / d (physical future inputs), nu_L x n_u*N.
    [[nodiscard]] MatrixXd jacobian_future_inputs(const VectorXd& u_nn) const;
    /// Hessian of w' features with respect to the physical future inputs, n_u*N x n_u*N.
    [[nodiscard]] MatrixXd hessian_future_inputs(const VectorXd& u_nn, const VectorXd& w) const;
    [[nodiscard]] const std::vector<LayerParams>& params() const { return params_; }

private:
    const HyperDnnModel* model_;
    std::vector<LayerParams> params_;
};

VectorXd phi_hl(const HyperDnnModel& model, const NnInput& in);
/// W_o phi_hl + b_o, de-normalized to physical outputs.
VectorXd phi_nn(const HyperDnnModel& model, const NnInput& in);
MatrixXd jacobian_phi_hl_wrt_future_u(const HyperDnnModel& model, const NnInput& in);

/// phi_hl for every column of a Hankel set (parameter histories from hs.Pp).
MatrixXd phi_hl_columns(const HyperDnnModel& model, const HankelSet& hs);

struct NetworkSpec {
    ModelDims dims;
    std::vector<int> hidden_sizes{30};
    std::vector<bool> modulated{true};
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int max_epochs = 5000;
    int patience = 200;
    double train_fraction = 0.65;
    int batch_size = 0;  ///< 0: full batch
};

/// Random initial model with scalers fitted on `data`.
HyperDnnModel initialize(const NetworkSpec& spec, const ChannelScalers& scalers, std::uint64_t seed);

/// Channel scalers from the columns of a Hankel set.
ChannelScalers fit_scalers(const HankelSet& hs, int n_u, int n_y, int n_p);

/// ADAM on the mean squared error of the normalized future outputs. The
/// first `train_fraction` of the columns train, the rest validate; the
/// parameters with the best validation loss are returned.
HyperDnnModel train(const HankelSet& data, const NetworkSpec& spec, const TrainConfig& cfg, std::uint64_t seed);

/// Least-squares output layer [W_o b_o] = Yf [Phi_HL; 1']^+ in normalized
/// output coordinates.
LayerParams refit_output_ls(const HyperDnnModel& model, const HankelSet& hs);

/// Copy of `model` with the refitted output layer installed.
HyperDnnModel with_output_layer(const HyperDnnModel& model, const LayerParams& output);

/// Multi-step prediction for the window's past data and future inputs.
VectorXd predict_nls(const HyperDnnModel& model, const Window& w);

/// Model file (structured text). Doubles are written with round-trip precision.
void save_model(const HyperDnnModel& model, const std::string& path);
HyperDnnModel load_model(const std::string& path);
std::string model_to_string(const HyperDnnModel& model);
HyperDnnModel model_from_string(const std::string& text);

inline constexpr int kModelSchemaVersion = 1;

}  // namespace npvdeepc::hypernet
