#include "npvdeepc/hypernet.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc::hypernet {

// ---------------------------------------------------------------------------
// Scaler
// ---------------------------------------------------------------------------

Scaler Scaler::fit(const MatrixXd& data) {
    if (data.cols() == 0) throw DataError("scaler: no samples");
    Scaler s;
    s.lo = data.rowwise().minCoeff();
    s.hi = data.rowwise().maxCoeff();
    for (Eigen::Index i = 0; i < s.lo.size(); ++i) {
        const double span = s.hi(i) - s.lo(i);
        if (!(span > 1e-12 * std::max(1.0, std::abs(s.hi(i)))))
            throw DataError("scaler: degenerate channel " + std::to_string(i) + " (constant data)");
    }
    return s;
}

VectorXd Scaler::normalize(const VectorXd& v) const {
    const auto n = lo.size();
    VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto c = i % n;
        out(i) = 2.0 * (v(i) - lo(c)) / (hi(c) - lo(c)) - 1.0;
    }
    return out;
}

VectorXd Scaler::denormalize(const VectorXd& v) const {
    const auto n = lo.size();
    VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto c = i % n;
        out(i) = lo(c) + 0.5 * (v(i) + 1.0) * (hi(c) - lo(c));
    }
    return out;
}

MatrixXd Scaler::normalize_rows(const MatrixXd& m) const {
    const VectorXd g = gain(m.rows());
    VectorXd offset(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) offset(i) = -2.0 * lo(i % lo.size()) / (hi(i % lo.size()) - lo(i % lo.size())) - 1.0;
    return (g.asDiagonal() * m).colwise() + offset;
}

MatrixXd Scaler::denormalize_rows(const MatrixXd& m) const {
    VectorXd scale(m.rows()), offset(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto c = i % lo.size();
        scale(i) = 0.5 * (hi(c) - lo(c));
        offset(i) = lo(c) + scale(i);
    }
    return (scale.asDiagonal() * m).colwise() + offset;
}

VectorXd Scaler::gain(Eigen::Index n) const {
    VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = i % lo.size();
        g(i) = 2.0 / (hi(c) - lo(c));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Model structure
// ---------------------------------------------------------------------------

std::vector<int> HyperDnnModel::layer_sizes() const {
    std::vector<int> s;
    for (const auto& l : layers) s.push_back(l.out);
    return s;
}

void HyperDnnModel::validate() const {
    if (layers.empty()) throw DimensionError("model: at least one hidden layer required");
    int in = dims.nn_input_size();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in != in) throw DimensionError("model: layer " + std::to_string(i) + " input size mismatch");
        const int blocks = l.modulated ? dims.hyper_input_size() + 1 : 1;
        if (l.G.rows() != l.out || l.G.cols() != blocks * (l.in + 1))
            throw DimensionError("model: layer " + std::to_string(i) + " parameter shape mismatch");
        in = l.out;
    }
    if (W_o.rows() != dims.nn_output_size() || W_o.cols() != in || b_o.size() != dims.nn_output_size())
        throw DimensionError("model: output layer shape mismatch");
    if (scalers.u.channels() != dims.n_u || scalers.y.channels() != dims.n_y || scalers.p.channels() != dims.n_p)
        throw DimensionError("model: scaler channel mismatch");
}

NnInput make_nn_input(const Window& w) {
    NnInput in;
    in.u_nn.resize(w.u_ini.size() + w.y_ini.size() + w.u_f.size());
    in.u_nn << w.u_ini, w.y_ini, w.u_f;
    in.p_vec = w.p_hist;
    return in;
}

namespace {

// Normalized u_NN: u blocks use the input scaler, y_ini the output scaler.
VectorXd normalize_u_nn(const ModelDims& d, const ChannelScalers& s, const VectorXd& u_nn) {
    if (u_nn.size() != d.nn_input_size())
        throw DimensionError("u_NN has length " + std::to_string(u_nn.size()) + ", expected " +
                             std::to_string(d.nn_input_size()));
    if (!u_nn.allFinite()) throw DataError("u_NN contains non-finite entries");
    const int nui = d.n_u * d.t_ini;
    const int nyi = d.n_y * d.t_ini;
    const int nuf = d.n_u * d.horizon;
    VectorXd out(u_nn.size());
    out << s.u.normalize(u_nn.head(nui)), s.y.normalize(u_nn.segment(nui, nyi)), s.u.normalize(u_nn.tail(nuf));
    return out;
}

MatrixXd normalize_u_nn_cols(const ModelDims& d, const ChannelScalers& s, const MatrixXd& cols) {
    const int nui = d.n_u * d.t_ini;
    const int nyi = d.n_y * d.t_ini;
    const int nuf = d.n_u * d.horizon;
    MatrixXd out(cols.rows(), cols.cols());
    out.topRows(nui) = s.u.normalize_rows(cols.topRows(nui));
    out.middleRows(nui, nyi) = s.y.normalize_rows(cols.middleRows(nui, nyi));
    out.bottomRows(nuf) = s.u.normalize_rows(cols.bottomRows(nuf));
    return out;
}

// [1; pi] for the hypernet, pi the normalized hypernet input.
VectorXd hyper_features(const ModelDims& d, const ChannelScalers& s, const VectorXd& p_vec) {
    if (p_vec.size() != d.p_vec_size())
        throw DimensionError("parameter vector has length " + std::to_string(p_vec.size()) + ", expected " +
                             std::to_string(d.p_vec_size()));
    if (!p_vec.allFinite()) throw DataError("parameter vector contains non-finite entries");
    const VectorXd pn = s.p.normalize(p_vec);
    VectorXd pi(d.hyper_input_size() + 1);
    pi(0) = 1.0;
    if (d.hyper_input == HyperInput::history) pi.tail(pn.size()) = pn;
    else pi.tail(d.n_p) = pn.tail(d.n_p);
    return pi;
}

}  // namespace

std::vector<LayerParams> hyper_forward(const HyperDnnModel& model, const VectorXd& p_vec) {
    const VectorXd pi = hyper_features(model.dims, model.scalers, p_vec);
    std::vector<LayerParams> out;
    out.reserve(model.layers.size());
    for (const auto& l : model.layers) {
        MatrixXd wb = l.G.leftCols(l.in + 1);
        if (l.modulated) {
            for (int j = 1; j < l.blocks(); ++j) wb += pi(j) * l.G.middleCols(j * (l.in + 1), l.in + 1);
        }
        out.push_back({wb.leftCols(l.in), wb.col(l.in)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// FrozenNetwork
// ---------------------------------------------------------------------------

FrozenNetwork::FrozenNetwork(const HyperDnnModel& model, const VectorXd& p_vec)
    : model_(&model), params_(hyper_forward(model, p_vec)) {}

FrozenNetwork::FrozenNetwork(const HyperDnnModel& model, std::vector<LayerParams> params)
    : model_(&model), params_(std::move(params)) {
    if (params_.size() != model.layers.size()) throw DimensionError("FrozenNetwork: layer count mismatch");
}

VectorXd FrozenNetwork::features(const VectorXd& u_nn) const {
    VectorXd z = normalize_u_nn(model_->dims, model_->scalers, u_nn);
    for (const auto& p : params_) z = (p.W * z + p.b).array().tanh().matrix();
    return z;
}

MatrixXd FrozenNetwork::features_batch(const MatrixXd& cols) const {
    if (cols.rows() != model_->dims.nn_input_size()) throw DimensionError("features_batch: row count mismatch");
    MatrixXd z = normalize_u_nn_cols(model_->dims, model_->scalers, cols);
    for (const auto& p : params_) z = ((p.W * z).colwise() + p.b).array().tanh().matrix();
    return z;
}

MatrixXd FrozenNetwork::jacobian_future_inputs(const VectorXd& u_nn) const {
    const ModelDims& d = model_->dims;
    VectorXd z = normalize_u_nn(d, model_->scalers, u_nn);
    const int off = d.future_offset();
    const int nuf = d.n_u * d.horizon;
    const VectorXd gain = model_->scalers.u.gain(nuf);
    MatrixXd jac;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& p = params_[i];
        z = (p.W * z + p.b).array().tanh().matrix();
        const VectorXd slope = (1.0 - z.array().square()).matrix();
        if (i == 0) jac = slope.asDiagonal() * p.W.middleCols(off, nuf) * gain.asDiagonal();
        else jac = slope.asDiagonal() * (p.W * jac);
    }
    return jac;
}

MatrixXd FrozenNetwork::hessian_future_inputs(const VectorXd& u_nn, const VectorXd& w) const {
    const ModelDims& d = model_->dims;
    if (w.size() != model_->feature_size()) throw DimensionError("hessian_future_inputs: weight length mismatch");
    const int off = d.future_offset();
    const int nuf = d.n_u * d.horizon;
    // Forward pass: activations z_l and Jacobians J_{l-1} of each layer input.
    std::vector<VectorXd> z{normalize_u_nn(d, model_->scalers, u_nn)};
    std::vector<MatrixXd> jin;
    MatrixXd jac = MatrixXd::Zero(z[0].size(), nuf);
    jac.middleRows(off, nuf) = model_->scalers.u.gain(nuf).asDiagonal();
    for (const auto& p : params_) {
        jin.push_back(jac);
        z.push_back((p.W * z.back() + p.b).array().tanh().matrix());
        jac = (1.0 - z.back().array().square()).matrix().asDiagonal() * (p.W * jac);
    }
    // Backward pass: H = sum_l J_{l-1}' W_l' diag(v_l tanh''(a_l)) W_l J_{l-1},
    // v_L = w and v_{l-1} = W_l' (v_l tanh'(a_l)).
    MatrixXd hess = MatrixXd::Zero(nuf, nuf);
    VectorXd v = w;
    for (std::size_t i = params_.size(); i-- > 0;) {
        const Eigen::ArrayXd t = z[i + 1].array();
        const Eigen::ArrayXd slope = 1.0 - t.square();
        const VectorXd curv = (v.array() * (-2.0 * t * slope)).matrix();
        const MatrixXd wj = params_[i].W * jin[i];
        hess += wj.transpose() * curv.asDiagonal() * wj;
        v = params_[i].W.transpose() * (v.array() * slope).matrix();
    }
    return 0.5 * (hess + hess.transpose());
}

VectorXd phi_hl(const HyperDnnModel& model, const NnInput& in) {
    return FrozenNetwork(model, in.p_vec).features(in.u_nn);
}

VectorXd phi_nn(const HyperDnnModel& model, const NnInput& in) {
    const VectorXd feat = phi_hl(model, in);
    return model.scalers.y.denormalize(model.W_o * feat + model.b_o);
}

MatrixXd jacobian_phi_hl_wrt_future_u(const HyperDnnModel& model, const NnInput& in) {
    return FrozenNetwork(model, in.p_vec).jacobian_future_inputs(in.u_nn);
}

MatrixXd phi_hl_columns(const HyperDnnModel& model, const HankelSet& hs) {
    const MatrixXd inputs = hs.past_and_future_inputs();
    MatrixXd out(model.feature_size(), hs.cols());
    for (int c = 0; c < hs.cols(); ++c) {
        out.col(c) = FrozenNetwork(model, hs.Pp.col(c)).features(inputs.col(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output-layer refit and prediction
// ---------------------------------------------------------------------------

LayerParams refit_output_ls(const HyperDnnModel& model, const HankelSet& hs) {
    if (hs.cols() == 0) throw DimensionError("refit_output_ls: empty Hankel set");
    if (hs.Yf.rows() != model.dims.nn_output_size()) throw DimensionError("refit_output_ls: Yf row mismatch");
    const MatrixXd phi = phi_hl_columns(model, hs);
    MatrixXd lifted(phi.rows() + 1, phi.cols());
    lifted << phi, MatrixXd::Ones(1, phi.cols());
    const MatrixXd yn = model.scalers.y.normalize_rows(hs.Yf);
    const MatrixXd theta = yn * optim::pinv(lifted);
    return {theta.leftCols(phi.rows()), theta.col(phi.rows())};
}

HyperDnnModel with_output_layer(const HyperDnnModel& model, const LayerParams& output) {
    HyperDnnModel m = model;
    if (output.W.rows() != m.W_o.rows() || output.W.cols() != m.W_o.cols() || output.b.size() != m.b_o.size())
        throw DimensionError("with_output_layer: shape mismatch");
    m.W_o = output.W;
    m.b_o = output.b;
    return m;
}

VectorXd predict_nls(const HyperDnnModel& model, const Window& w) {
    const ModelDims& d = model.dims;
    if (w.u_ini.size() != d.n_u * d.t_ini || w.y_ini.size() != d.n_y * d.t_ini || w.u_f.size() != d.n_u * d.horizon)
        throw DimensionError("predict_nls: window horizons do not match the model");
    return phi_nn(model, make_nn_input(w));
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json matrix_json(const MatrixXd& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("model file: matrix size mismatch");
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

json vector_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json scaler_json(const Scaler& s) { return json{{"lo", vector_json(s.lo)}, {"hi", vector_json(s.hi)}}; }

Scaler scaler_from_json(const json& j) { return Scaler{vector_from_json(j.at("lo")), vector_from_json(j.at("hi"))}; }

}  // namespace

std::string model_to_string(const HyperDnnModel& model) {
    json j;
    j["schema_version"] = kModelSchemaVersion;
    j["dims"] = {{"t_ini", model.dims.t_ini},
                 {"horizon", model.dims.horizon},
                 {"n_u", model.dims.n_u},
                 {"n_y", model.dims.n_y},
                 {"n_p", model.dims.n_p},
                 {"hyper_input", model.dims.hyper_input == HyperInput::history ? "history" : "current"}};
    json layers = json::array();
    for (const auto& l : model.layers) {
        layers.push_back({{"in", l.in}, {"out", l.out}, {"modulated", l.modulated}, {"G", matrix_json(l.G)}});
    }
    j["layers"] = layers;
    j["output"] = {{"W", matrix_json(model.W_o)}, {"b", vector_json(model.b_o)}};
    j["scalers"] = {{"u", scaler_json(model.scalers.u)},
                    {"y", scaler_json(model.scalers.y)},
                    {"p", scaler_json(model.scalers.p)}};
    j["history"] = {{"train_mse", model.history.train_mse},
                    {"validation_mse", model.history.validation_mse},
                    {"best_epoch", model.history.best_epoch}};
    return j.dump(1);
}

HyperDnnModel model_from_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != kModelSchemaVersion)
            throw DataError("model file: unsupported schema_version");
        HyperDnnModel m;
        const auto& d = j.at("dims");
        m.dims.t_ini = d.at("t_ini").get<int>();
        m.dims.horizon = d.at("horizon").get<int>();
        m.dims.n_u = d.at("n_u").get<int>();
        m.dims.n_y = d.at("n_y").get<int>();
        m.dims.n_p = d.at("n_p").get<int>();
        const auto hi = d.at("hyper_input").get<std::string>();
        if (hi != "history" && hi != "current") throw DataError("model file: unknown hyper_input '" + hi + "'");
        m.dims.hyper_input = hi == "history" ? HyperInput::history : HyperInput::current;
        for (const auto& l : j.at("layers")) {
            HiddenLayer layer;
            layer.in = l.at("in").get<int>();
            layer.out = l.at("out").get<int>();
            layer.modulated = l.at("modulated").get<bool>();
            layer.G = matrix_from_json(l.at("G"));
            m.layers.push_back(std::move(layer));
        }
        m.W_o = matrix_from_json(j.at("output").at("W"));
        m.b_o = vector_from_json(j.at("output").at("b"));
        m.scalers.u = scaler_from_json(j.at("scalers").at("u"));
        m.scalers.y = scaler_from_json(j.at("scalers").at("y"));
        m.scalers.p = scaler_from_json(j.at("scalers").at("p"));
        if (j.contains("history")) {
            const auto& h = j.at("history");
            m.history.train_mse = h.at("train_mse").get<std::vector<double>>();
            m.history.validation_mse = h.at("validation_mse").get<std::vector<double>>();
            m.history.best_epoch = h.at("best_epoch").get<int>();
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
}

void save_model(const HyperDnnModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write model file '" + path + "'");
    f << model_to_string(model) << '\n';
}

HyperDnnModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read model file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return model_from_string(ss.str());
}

}  // namespace npvdeepc::hypernet
