#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/hypernet.hpp"

namespace npvdeepc::hypernet {

namespace {

MatrixXd channel_samples(const MatrixXd& past, const MatrixXd& future, int n) {
    const Eigen::Index per_past = past.rows() / n;
    const Eigen::Index per_future = future.rows() / n;
    MatrixXd out(n, (per_past + per_future) * past.cols());
    Eigen::Index c = 0;
    for (Eigen::Index col = 0; col < past.cols(); ++col) {
        for (Eigen::Index t = 0; t < per_past; ++t) out.col(c++) = past.block(t * n, col, n, 1);
        for (Eigen::Index t = 0; t < per_future; ++t) out.col(c++) = future.block(t * n, col, n, 1);
    }
    return out;
}

MatrixXd glorot(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    return m;
}

// Rows of block j are [X; 1] scaled column-wise by pi_j (pi_0 = 1), so the
// pre-activation of a modulated layer is G * kron_features(X, pi).
MatrixXd kron_features(const MatrixXd& x, const MatrixXd& pi, bool modulated) {
    const Eigen::Index in = x.rows() + 1;
    const Eigen::Index blocks = modulated ? pi.rows() : 1;
    MatrixXd k(blocks * in, x.cols());
    k.topRows(x.rows()) = x;
    k.row(x.rows()).setOnes();
    for (Eigen::Index j = 1; j < blocks; ++j)
        k.middleRows(j * in, in) = k.topRows(in) * pi.row(j).asDiagonal();
    return k;
}

struct Params {
    std::vector<MatrixXd> G;
    MatrixXd W_o;
    VectorXd b_o;
};

struct Grads {
    std::vector<MatrixXd> G;
    MatrixXd W_o;
    VectorXd b_o;
};

struct Batch {
    MatrixXd k0;  ///< first-layer Kron features
    MatrixXd pi;  ///< [1; pi] per column
    MatrixXd y;   ///< normalized targets
};

Batch make_batch(const MatrixXd& x, const MatrixXd& pi, const MatrixXd& y, const std::vector<HiddenLayer>& layers,
                 const std::vector<Eigen::Index>& idx) {
    Batch b;
    MatrixXd xs(x.rows(), static_cast<Eigen::Index>(idx.size()));
    b.pi.resize(pi.rows(), xs.cols());
    b.y.resize(y.rows(), xs.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        xs.col(c) = x.col(idx[i]);
        b.pi.col(c) = pi.col(idx[i]);
        b.y.col(c) = y.col(idx[i]);
    }
    b.k0 = kron_features(xs, b.pi, layers.front().modulated);
    return b;
}

double loss_and_grad(const Params& p, const std::vector<HiddenLayer>& layers, const Batch& b, Grads* g) {
    const auto n_layers = layers.size();
    std::vector<MatrixXd> ks(n_layers);
    std::vector<MatrixXd> zs(n_layers);
    ks[0] = b.k0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (l > 0) ks[l] = kron_features(zs[l - 1], b.pi, layers[l].modulated);
        zs[l] = (p.G[l] * ks[l]).array().tanh().matrix();
    }
    const MatrixXd err = (p.W_o * zs.back()).colwise() + p.b_o - b.y;
    const double scale = 1.0 / static_cast<double>(err.size());
    const double loss = err.squaredNorm() * scale;
    if (g == nullptr) return loss;

    const MatrixXd dy = 2.0 * scale * err;
    g->W_o = dy * zs.back().transpose();
    g->b_o = dy.rowwise().sum();
    g->G.resize(n_layers);
    MatrixXd dz = p.W_o.transpose() * dy;
    for (std::size_t l = n_layers; l-- > 0;) {
        const MatrixXd da = (dz.array() * (1.0 - zs[l].array().square())).matrix();
        g->G[l] = da * ks[l].transpose();
        if (l == 0) break;
        const int in = layers[l].in;
        const int blocks = layers[l].blocks();
        dz = p.G[l].leftCols(in).transpose() * da;
        for (int j = 1; j < blocks; ++j)
            dz += (p.G[l].middleCols(j * (in + 1), in).transpose() * da) * b.pi.row(j).asDiagonal();
    }
    return loss;
}

class Adam {
public:
    Adam(const Params& shape, const TrainConfig& cfg) : cfg_(cfg) {
        for (const auto& g : shape.G) {
            m_.G.push_back(MatrixXd::Zero(g.rows(), g.cols()));
            v_.G.push_back(MatrixXd::Zero(g.rows(), g.cols()));
        }
        m_.W_o = v_.W_o = MatrixXd::Zero(shape.W_o.rows(), shape.W_o.cols());
        m_.b_o = v_.b_o = VectorXd::Zero(shape.b_o.size());
    }

    void step(Params& p, const Grads& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t l = 0; l < p.G.size(); ++l) update(p.G[l], g.G[l], m_.G[l], v_.G[l], c1, c2);
        update(p.W_o, g.W_o, m_.W_o, v_.W_o, c1, c2);
        update(p.b_o, g.b_o, m_.b_o, v_.b_o, c1, c2);
    }

private:
    template <typename M>
    void update(M& x, const M& g, M& m, M& v, double c1, double c2) const {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v.array() = cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * g.array().square();
        x.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }

    TrainConfig cfg_;
    Grads m_, v_;
    int t_ = 0;
};

void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        throw ConfigError("train: ADAM betas must lie in [0, 1)");
    if (!(cfg.epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
    if (cfg.max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (cfg.patience < 1) throw ConfigError("train: patience must be >= 1");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw ConfigError("train: train_fraction must lie in (0, 1)");
    if (cfg.batch_size < 0) throw ConfigError("train: batch_size must be >= 0");
}

}  // namespace

ChannelScalers fit_scalers(const HankelSet& hs, int n_u, int n_y, int n_p) {
    if (hs.cols() == 0) throw DataError("fit_scalers: empty Hankel set");
    ChannelScalers s;
    s.u = Scaler::fit(channel_samples(hs.Up, hs.Uf, n_u));
    s.y = Scaler::fit(channel_samples(hs.Yp, hs.Yf, n_y));
    s.p = Scaler::fit(channel_samples(hs.Pp, MatrixXd(0, hs.Pp.cols()), n_p));
    return s;
}

HyperDnnModel initialize(const NetworkSpec& spec, const ChannelScalers& scalers, std::uint64_t seed) {
    if (spec.hidden_sizes.empty()) throw ConfigError("network: at least one hidden layer required");
    if (spec.modulated.size() != spec.hidden_sizes.size())
        throw ConfigError("network: modulated flags must match the hidden layer count");
    const ModelDims& d = spec.dims;
    if (d.t_ini < 1 || d.horizon < 1 || d.n_u < 1 || d.n_y < 1 || d.n_p < 1)
        throw ConfigError("network: dimensions must be positive");
    std::mt19937_64 rng(seed);
    HyperDnnModel m;
    m.dims = d;
    m.scalers = scalers;
    int in = d.nn_input_size();
    const int m_hyper = d.hyper_input_size();
    for (std::size_t i = 0; i < spec.hidden_sizes.size(); ++i) {
        const int out = spec.hidden_sizes[i];
        if (out < 1) throw ConfigError("network: hidden layer sizes must be positive");
        HiddenLayer l;
        l.in = in;
        l.out = out;
        l.modulated = spec.modulated[i];
        const int blocks = l.modulated ? m_hyper + 1 : 1;
        l.G = MatrixXd::Zero(out, blocks * (in + 1));
        l.G.leftCols(in) = glorot(out, in, rng);
        const double shrink = 1.0 / std::sqrt(static_cast<double>(std::max(1, m_hyper)));
        for (int j = 1; j < blocks; ++j) l.G.middleCols(j * (in + 1), in) = shrink * glorot(out, in, rng);
        m.layers.push_back(std::move(l));
        in = out;
    }
    m.W_o = glorot(d.nn_output_size(), in, rng);
    m.b_o = VectorXd::Zero(d.nn_output_size());
    m.validate();
    return m;
}

HyperDnnModel train(const HankelSet& data, const NetworkSpec& spec, const TrainConfig& cfg, std::uint64_t seed) {
    validate_train_config(cfg);
    const ModelDims& d = spec.dims;
    if (data.t_ini != d.t_ini || data.horizon != d.horizon)
        throw DimensionError("train: Hankel horizons do not match the network dimensions");
    if (data.Up.rows() != d.n_u * d.t_ini || data.Yp.rows() != d.n_y * d.t_ini || data.Pp.rows() != d.p_vec_size())
        throw DimensionError("train: Hankel channel counts do not match the network dimensions");
    const int n = data.cols();
    const int n_train = static_cast<int>(std::floor(cfg.train_fraction * n));
    if (n_train < 1 || n - n_train < 1) throw DataError("train: too few windows for a train/validation split");

    HyperDnnModel model = initialize(spec, fit_scalers(data, d.n_u, d.n_y, d.n_p), seed);
    const ChannelScalers& sc = model.scalers;

    // Normalized inputs, hypernet features and targets.
    const int nui = d.n_u * d.t_ini;
    const int nyi = d.n_y * d.t_ini;
    MatrixXd x(d.nn_input_size(), n);
    x.topRows(nui) = sc.u.normalize_rows(data.Up);
    x.middleRows(nui, nyi) = sc.y.normalize_rows(data.Yp);
    x.bottomRows(d.n_u * d.horizon) = sc.u.normalize_rows(data.Uf);
    const MatrixXd pn = sc.p.normalize_rows(data.Pp);
    MatrixXd pi(d.hyper_input_size() + 1, n);
    pi.row(0).setOnes();
    pi.bottomRows(d.hyper_input_size()) = pn.bottomRows(d.hyper_input_size());
    const MatrixXd y = sc.y.normalize_rows(data.Yf);

    std::vector<Eigen::Index> train_idx(static_cast<std::size_t>(n_train));
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::vector<Eigen::Index> val_idx(static_cast<std::size_t>(n - n_train));
    std::iota(val_idx.begin(), val_idx.end(), n_train);
    const Batch train_all = make_batch(x, pi, y, model.layers, train_idx);
    const Batch val_all = make_batch(x, pi, y, model.layers, val_idx);

    Params p;
    for (const auto& l : model.layers) p.G.push_back(l.G);
    p.W_o = model.W_o;
    p.b_o = model.b_o;
    Params best = p;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    Adam adam(p, cfg);
    Grads g;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n_train;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double train_loss = 0.0;
        if (full_batch) {
            train_loss = loss_and_grad(p, model.layers, train_all, &g);
            adam.step(p, g);
        } else {
            std::shuffle(train_idx.begin(), train_idx.end(), rng);
            for (int first = 0; first < n_train; first += cfg.batch_size) {
                const int count = std::min(cfg.batch_size, n_train - first);
                const std::vector<Eigen::Index> idx(train_idx.begin() + first, train_idx.begin() + first + count);
                loss_and_grad(p, model.layers, make_batch(x, pi, y, model.layers, idx), &g);
                adam.step(p, g);
            }
            train_loss = loss_and_grad(p, model.layers, train_all, nullptr);
        }
        const double val_loss = loss_and_grad(p, model.layers, val_all, nullptr);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw DivergenceError("train: loss became non-finite at epoch " + std::to_string(epoch));
        model.history.train_mse.push_back(train_loss);
        model.history.validation_mse.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best = p;
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }

    for (std::size_t l = 0; l < model.layers.size(); ++l) model.layers[l].G = best.G[l];
    model.W_o = best.W_o;
    model.b_o = best.b_o;
    model.history.best_epoch = best_epoch;
    return model;
}

}  // namespace npvdeepc::hypernet
