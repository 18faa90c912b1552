#include "npvdeepc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "npvdeepc/baseline.hpp"
#include "npvdeepc/deepc.hpp"
#include "npvdeepc/errors.hpp"
#include "npvdeepc/io.hpp"
#include "npvdeepc/verify.hpp"

namespace npvdeepc::experiment {

using nlohmann::json;

namespace {

// Offsets that derive independent streams from the run seed.
constexpr std::uint64_t kTrainSeed = 1;
constexpr std::uint64_t kCemTrainSeed = 2;
constexpr std::uint64_t kNoiseSeed = 100;

int steps_for(double duration_s, double dt) { return static_cast<int>(std::lround(duration_s / dt)); }

VectorXd stack_cols(const MatrixXd& m, int first, int count) {
    const MatrixXd block = m.middleCols(first, count);
    return Eigen::Map<const VectorXd>(block.data(), block.size());
}

json metrics_json(const metrics::RunMetrics& m) {
    return {{"controller", m.controller}, {"noise", m.noisy}, {"rmse", m.rmse}, {"ise", m.ise}, {"ju", m.ju}};
}

json loop_summary(const LoopLog& log) {
    int failures = 0;
    for (const auto& s : log.status) failures += s == "optimal" ? 0 : 1;
    return {{"input_violations", log.input_violations},
            {"max_output_violation", log.max_output_violation},
            {"non_optimal_steps", failures},
            {"steps", log.length()}};
}

}  // namespace

std::string to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::npv_deepc: return "npv_deepc";
        case ControllerKind::neural_deepc: return "neural_deepc";
        case ControllerKind::deepc: return "deepc";
        case ControllerKind::mpc: return "mpc";
    }
    return "?";
}

ControllerKind controller_from_string(const std::string& name) {
    for (auto k : all_controllers())
        if (to_string(k) == name) return k;
    throw ConfigError("unknown controller '" + name + "'");
}

std::vector<ControllerKind> all_controllers() {
    return {ControllerKind::npv_deepc, ControllerKind::neural_deepc, ControllerKind::deepc, ControllerKind::mpc};
}

// ---------------------------------------------------------------------------
// Data and models
// ---------------------------------------------------------------------------

Trajectory collect(const config::RunConfig& cfg) {
    return plant::collect_open_loop(cfg.plant, cfg.excitation.signal, cfg.excitation.n_points, cfg.seed, cfg.dt);
}

HankelSet training_hankel(const config::RunConfig& cfg, const Trajectory& data, int horizon) {
    return partition(data, cfg.control.t_ini, horizon);
}

hypernet::HyperDnnModel train_model(const config::RunConfig& cfg, const Trajectory& data, int horizon) {
    const std::uint64_t seed = cfg.seed + (horizon == cfg.control.horizon ? kTrainSeed : kCemTrainSeed);
    return hypernet::train(training_hankel(cfg, data, horizon), cfg.network(horizon), cfg.model.train, seed);
}

ModelReport evaluate_model(const hypernet::HyperDnnModel& model, const config::RunConfig& cfg, const Trajectory& data) {
    const int t_ini = model.dims.t_ini;
    const int horizon = model.dims.horizon;
    const int depth = t_ini + horizon;
    const int windows = data.length() - depth + 1;
    const int n_train = static_cast<int>(std::floor(cfg.model.train.train_fraction * windows));
    auto score = [&](int first, int last) {
        std::vector<VectorXd> truth, pred;
        for (int s = first; s < last; s += depth) {
            const Window w = window_at(data, s, t_ini, horizon);
            truth.push_back(w.y_f);
            pred.push_back(hypernet::predict_nls(model, w));
        }
        return metrics::bfr(truth, pred, model.dims.n_y);
    };
    ModelReport r;
    // Validation windows start after the last training window so no sample is shared.
    r.train_bfr = score(0, n_train);
    r.validation_bfr = score(n_train + depth - 1, windows);
    r.epochs = static_cast<int>(model.history.train_mse.size());
    r.best_epoch = model.history.best_epoch;
    return r;
}

Setup prepare(const config::RunConfig& cfg, bool need_cem_model) {
    Setup s;
    s.cfg = cfg;
    s.data = cfg.data_path.empty() ? collect(cfg) : io::read_trajectory_csv(cfg.data_path, cfg.dt);
    s.model = std::make_shared<const hypernet::HyperDnnModel>(
        cfg.model_path.empty() ? train_model(cfg, s.data, cfg.control.horizon) : hypernet::load_model(cfg.model_path));
    if (s.model->dims.horizon != cfg.control.horizon || s.model->dims.t_ini != cfg.control.t_ini)
        throw ConfigError("model file horizons do not match control.t_ini / control.horizon");
    if (need_cem_model) {
        s.cem_model = std::make_shared<const hypernet::HyperDnnModel>(
            cfg.cem_model_path.empty() ? train_model(cfg, s.data, cfg.cem.horizon)
                                       : hypernet::load_model(cfg.cem_model_path));
        if (s.cem_model->dims.horizon != cfg.cem.horizon)
            throw ConfigError("cem model horizon does not match cem.horizon");
    }
    return s;
}

std::unique_ptr<control::Controller> make_controller(ControllerKind kind, const Setup& setup) {
    const auto& cfg = setup.cfg;
    const int t_ini = cfg.control.t_ini;
    const int horizon = cfg.control.horizon;
    switch (kind) {
        case ControllerKind::deepc: {
            const HankelSet hs = partition(setup.data.slice(0, cfg.hankel.deepc_points), t_ini, horizon);
            return std::make_unique<deepc::DeepcController>(
                hs, cfg.controller(cfg.deepc.lambda_g, cfg.deepc.lambda_sigma), cfg.deepc.regularizer);
        }
        case ControllerKind::npv_deepc:
        case ControllerKind::neural_deepc: {
            const bool npv_mode = kind == ControllerKind::npv_deepc;
            const auto& sec = npv_mode ? cfg.npv_deepc : cfg.neural_deepc;
            const HankelSet hs = partition(setup.data.slice(0, cfg.hankel.neural_points), t_ini, horizon);
            std::optional<VectorXd> frozen;
            if (!npv_mode) frozen = VectorXd::Constant(setup.model->dims.p_vec_size(), setup.data.p.mean());
            npv::NeuralHankel nh = npv::transform_hankel(*setup.model, hs, frozen);
            return std::make_unique<npv::NpvController>(setup.model, std::move(nh),
                                                         cfg.controller(sec.lambda_g, sec.lambda_sigma),
                                                         npv_mode ? npv::Mode::npv : npv::Mode::neural, sec.kernel_slack);
        }
        case ControllerKind::mpc:
            return std::make_unique<baseline::MpcController>(baseline::identify_arx(setup.data, cfg.mpc.na, cfg.mpc.nb),
                                                             cfg.controller(0.0, 0.0));
    }
    throw ConfigError("unsupported controller");
}

std::shared_ptr<npv::CemController> make_cem_controller(ControllerKind kind, const Setup& setup) {
    if (kind != ControllerKind::npv_deepc && kind != ControllerKind::neural_deepc)
        throw ConfigError("the dose controller needs a neural-space predictor (npv_deepc or neural_deepc)");
    if (!setup.cem_model) throw ConfigError("dose controller requested without a dose model");
    const auto& cfg = setup.cfg;
    const auto& cem = cfg.cem;
    control::ControllerConfig cc = cfg.controller(cem.lambda_g, cem.lambda_sigma);
    cc.horizon = cem.horizon;
    cc.Q = MatrixXd::Zero(2, 2);
    cc.P = MatrixXd::Zero(2, 2);
    cc.R = cem.R.asDiagonal();
    cc.box.y_hi(0) -= cem.ts_backoff;
    const bool npv_mode = kind == ControllerKind::npv_deepc;
    const HankelSet hs = partition(setup.data.slice(0, cfg.hankel.neural_points), cfg.control.t_ini, cem.horizon);
    std::optional<VectorXd> frozen;
    if (!npv_mode) frozen = VectorXd::Constant(setup.cem_model->dims.p_vec_size(), setup.data.p.mean());
    auto inner = std::make_shared<npv::NpvController>(setup.cem_model, npv::transform_hankel(*setup.cem_model, hs, frozen),
                                                      cc, npv_mode ? npv::Mode::npv : npv::Mode::neural,
                                                      npv_mode ? cfg.npv_deepc.kernel_slack : cfg.neural_deepc.kernel_slack);
    npv::CemSettings st;
    st.target = cem.target;
    st.terminal_weight = cem.terminal_weight;
    st.dt_minutes = cfg.dt / 60.0;
    return std::make_shared<npv::CemController>(inner, st);
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

Eigen::Vector2d steady_input(const plant::SurrogateParams& params, const plant::BoxConstraints& box, double ts,
                             double d, double q) {
    q = std::clamp(q, box.u_lo(1), box.u_hi(1));
    double lo = box.u_lo(0);
    double hi = box.u_hi(0);
    if (plant::surrogate_steady_state(params, {lo, q}, d)(0) >= ts) return {lo, q};
    if (plant::surrogate_steady_state(params, {hi, q}, d)(0) <= ts) return {hi, q};
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (plant::surrogate_steady_state(params, {mid, q}, d)(0) < ts) lo = mid;
        else hi = mid;
    }
    return {0.5 * (lo + hi), q};
}

double max_steady_rise(const plant::SurrogateParams& params, const plant::BoxConstraints& box, double d) {
    double best = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double q = box.u_lo(1) + (box.u_hi(1) - box.u_lo(1)) * i / 200.0;
        best = std::max(best, plant::surrogate_steady_state(params, {box.u_hi(0), q}, d)(0) - params.t_amb);
    }
    return best;
}

namespace {

struct LoopState {
    LoopLog log;
    plant::SurrogatePlant plant;
    std::mt19937_64 rng;
    std::normal_distribution<double> noise;
    double sigma;
};

LoopLog init_log(const std::string& name, const config::RunConfig& cfg, int n) {
    LoopLog log;
    log.controller = name;
    log.dt = cfg.dt;
    log.t_ini = cfg.control.t_ini;
    log.u.resize(2, n);
    log.y_true.resize(2, n);
    log.y_meas.resize(2, n);
    log.r = VectorXd::Zero(n);
    log.d.resize(n);
    log.cem.resize(n);
    return log;
}

void check_bounds(LoopLog& log, const plant::BoxConstraints& box, int k, const Eigen::Vector2d& u) {
    for (int i = 0; i < 2; ++i) {
        if (u(i) < box.u_lo(i) - 1e-9 || u(i) > box.u_hi(i) + 1e-9 || !std::isfinite(u(i))) ++log.input_violations;
        const double y = log.y_true(i, k);
        log.max_output_violation = std::max({log.max_output_violation, y - box.y_hi(i), box.y_lo(i) - y});
    }
}

control::PastData past_at(const LoopLog& log, int k, int t_ini) {
    control::PastData past;
    past.u_ini = stack_cols(log.u, k - t_ini, t_ini);
    past.y_ini = stack_cols(log.y_meas, k - t_ini, t_ini);
    past.p_hist = log.d.segment(k - t_ini, t_ini);
    return past;
}

void record_step(LoopLog& log, const control::StepResult& res) {
    log.cpu_s.push_back(res.cpu_time_s);
    log.status.push_back(optim::to_string(res.diag.status));
    log.kkt.push_back(res.diag.kkt_residual);
    log.iterations.push_back(res.diag.iterations);
}

}  // namespace

LoopLog run_tracking(control::Controller& ctrl, const config::RunConfig& cfg, const Signal& reference,
                     const Signal& distance, double duration_s, double noise_sigma, std::uint64_t noise_seed) {
    const int n = steps_for(duration_s, cfg.dt);
    const int t_ini = cfg.control.t_ini;
    if (n <= t_ini) throw ConfigError("scenario shorter than T_ini samples");
    const auto& box = cfg.control.box;
    LoopLog log = init_log(ctrl.name(), cfg, n);

    const double d0 = distance(0.0);
    const Eigen::Vector2d u0 = steady_input(cfg.plant, box, reference(0.0), d0, cfg.scenario.nominal_q);
    const Eigen::Vector2d ss = plant::surrogate_steady_state(cfg.plant, u0, d0);
    plant::PlantState init;
    init.Ts = ss(0);
    init.Tg = ss(1);
    init.d = d0;
    plant::SurrogatePlant plant(cfg.plant, init, cfg.dt, box);
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);

    ctrl.reset();
    Eigen::Vector2d u_prev = u0;
    for (int k = 0; k < n; ++k) {
        const double t = k * cfg.dt;
        log.d(k) = distance(t);
        log.r(k) = reference(t);
        log.y_true.col(k) = plant.output();
        log.cem(k) = plant.state().cem;
        log.y_meas.col(k) = log.y_true.col(k);
        if (noise_sigma > 0.0)
            for (int i = 0; i < 2; ++i) log.y_meas(i, k) += noise(rng);

        Eigen::Vector2d u = u0;
        if (k >= t_ini) {
            try {
                const control::StepResult res =
                    ctrl.step(past_at(log, k, t_ini), Eigen::Vector2d(log.r(k), 0.0), u_prev);
                u = res.u_apply;
                record_step(log, res);
            } catch (const SolverError&) {
                u = u_prev;
                log.cpu_s.push_back(0.0);
                log.status.emplace_back("error");
                log.kkt.push_back(std::nan(""));
                log.iterations.push_back(0);
            }
        }
        log.u.col(k) = u;
        check_bounds(log, box, k, u);
        plant.step(u, log.d(k));
        u_prev = u.cwiseMax(box.u_lo).cwiseMin(box.u_hi);
    }
    return log;
}

LoopLog run_cem(npv::CemController& ctrl, const config::RunConfig& cfg, double noise_sigma, std::uint64_t noise_seed) {
    const auto& cem = cfg.cem;
    const int n = steps_for(cem.duration_s, cfg.dt);
    const int t_ini = cfg.control.t_ini;
    if (n <= t_ini) throw ConfigError("cem scenario shorter than T_ini samples");
    const auto& box = cfg.control.box;
    LoopLog log = init_log(ctrl.inner().name() + "_cem", cfg, n);
    auto distance = [&](double t) { return cem.distance.at(t); };

    const double d0 = distance(0.0);
    const Eigen::Vector2d u0 = steady_input(cfg.plant, box, cem.initial_ts, d0, cfg.scenario.nominal_q);
    const Eigen::Vector2d ss = plant::surrogate_steady_state(cfg.plant, u0, d0);
    plant::PlantState init;
    init.Ts = ss(0);
    init.Tg = ss(1);
    init.d = d0;
    plant::SurrogatePlant plant(cfg.plant, init, cfg.dt, box);
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);

    ctrl.inner().reset();
    Eigen::Vector2d u_prev = u0;
    double cem_estimate = 0.0;  // accumulated from measured Ts
    for (int k = 0; k < n; ++k) {
        const double t = k * cfg.dt;
        log.d(k) = distance(t);
        log.r(k) = cem.target;
        log.y_true.col(k) = plant.output();
        log.cem(k) = plant.state().cem;
        log.y_meas.col(k) = log.y_true.col(k);
        if (noise_sigma > 0.0)
            for (int i = 0; i < 2; ++i) log.y_meas(i, k) += noise(rng);

        Eigen::Vector2d u = u0;
        if (k >= t_ini) {
            try {
                const control::StepResult res = ctrl.step(past_at(log, k, t_ini), cem_estimate, u_prev);
                u = res.u_apply;
                record_step(log, res);
            } catch (const SolverError&) {
                u = u_prev;
                log.cpu_s.push_back(0.0);
                log.status.emplace_back("error");
                log.kkt.push_back(std::nan(""));
                log.iterations.push_back(0);
            }
        }
        cem_estimate = plant::cem_update(cem_estimate, log.y_meas(0, k), cfg.dt / 60.0);
        log.u.col(k) = u;
        check_bounds(log, box, k, u);
        plant.step(u, log.d(k));
        u_prev = u.cwiseMax(box.u_lo).cwiseMin(box.u_hi);
    }
    return log;
}

metrics::RunMetrics score(const LoopLog& log, bool noisy) {
    metrics::RunMetrics m;
    m.controller = log.controller;
    m.noisy = noisy;
    const MatrixXd y = log.y_true.row(0);
    const MatrixXd r = log.r.transpose();
    const int last = log.length() - 1;
    m.rmse = metrics::rmse(y, r, log.t_ini, last);
    m.ise = metrics::ise(y, r, log.t_ini, last);
    m.ju = metrics::control_energy(log.u, log.t_ini, last);
    if (!log.cpu_s.empty()) m.mean_cpu_s = metrics::mean_cpu(log.cpu_s);
    return m;
}

CemReport analyse_cem(const LoopLog& log, const config::CemSection& cem) {
    CemReport rep;
    const int n = log.length();
    // Dose after the last applied step.
    const double dt_min = log.dt / 60.0;
    rep.final_cem = plant::cem_update(log.cem(n - 1), log.y_true(0, n - 1), dt_min);
    for (int k = 1; k < n; ++k)
        if (log.cem(k) < log.cem(k - 1)) rep.monotone = false;
    rep.reached = rep.final_cem >= cem.target;
    rep.overshoot = rep.final_cem > cem.target + 0.1;

    std::vector<double> rates;
    for (int k = 0; k + 1 < n; ++k) {
        const double t = k * log.dt;
        if (t < cem.perturb_start_s || t >= cem.perturb_end_s) continue;
        if (log.cem(k + 1) >= 0.9 * cem.target) continue;
        rates.push_back((log.cem(k + 1) - log.cem(k)) / dt_min);
    }
    if (rates.empty()) return rep;
    std::vector<double> sorted = rates;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    rep.rate_median = sorted[sorted.size() / 2];
    if (rep.rate_median <= 0.0) {
        rep.rate_max_deviation = std::numeric_limits<double>::infinity();
        return rep;
    }
    for (double r : rates) rep.rate_max_deviation = std::max(rep.rate_max_deviation, std::abs(r / rep.rate_median - 1.0));
    return rep;
}

std::string loop_csv(const LoopLog& log) {
    using io::format_double;
    std::ostringstream os;
    os << "k,t,r,Ts,Tg,Ts_meas,Tg_meas,P,q,d,cem,status,iterations,kkt\n";
    for (int k = 0; k < log.length(); ++k) {
        const int s = k - log.t_ini;
        os << k << ',' << format_double(k * log.dt) << ',' << format_double(log.r(k)) << ','
           << format_double(log.y_true(0, k)) << ',' << format_double(log.y_true(1, k)) << ','
           << format_double(log.y_meas(0, k)) << ',' << format_double(log.y_meas(1, k)) << ','
           << format_double(log.u(0, k)) << ',' << format_double(log.u(1, k)) << ',' << format_double(log.d(k)) << ','
           << format_double(log.cem(k)) << ',';
        if (s >= 0 && s < static_cast<int>(log.status.size()))
            os << log.status[static_cast<std::size_t>(s)] << ',' << log.iterations[static_cast<std::size_t>(s)] << ','
               << format_double(log.kkt[static_cast<std::size_t>(s)]);
        else
            os << "hold,0,0";
        os << '\n';
    }
    return os.str();
}

std::string timing_csv(const LoopLog& log) {
    std::ostringstream os;
    os << "k,cpu_s\n";
    for (std::size_t i = 0; i < log.cpu_s.size(); ++i)
        os << static_cast<int>(i) + log.t_ini << ',' << io::format_double(log.cpu_s[i]) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Bench and sweep
// ---------------------------------------------------------------------------

std::vector<metrics::RunMetrics> bench(const Setup& setup, std::vector<LoopLog>* logs) {
    const auto& cfg = setup.cfg;
    const auto& sc = cfg.scenario;
    auto reference = [&](double t) { return sc.reference.at(t); };
    auto distance = [&](double t) { return sc.distance.at(t); };
    std::vector<metrics::RunMetrics> rows;
    for (bool noisy : {false, true}) {
        for (auto kind : all_controllers()) {
            auto ctrl = make_controller(kind, setup);
            LoopLog log = run_tracking(*ctrl, cfg, reference, distance, sc.duration_s, noisy ? sc.noise_sigma : 0.0,
                                       cfg.seed + kNoiseSeed);
            rows.push_back(score(log, noisy));
            if (logs) logs->push_back(std::move(log));
        }
    }
    return rows;
}

std::vector<SweepRow> sweep(const Setup& setup, std::vector<LoopLog>* logs) {
    const auto& cfg = setup.cfg;
    const auto& sc = cfg.scenario;
    const double cap = cfg.control.box.y_hi(0) - cfg.plant.t_amb;
    std::vector<SweepRow> rows;
    for (double d : sc.sweep_distances) {
        const double span = std::min(max_steady_rise(cfg.plant, cfg.control.box, d), cap);
        auto reference = [&](double t) { return cfg.plant.t_amb + sc.sweep_levels.at(t) * span; };
        auto distance = [d](double) { return d; };
        for (auto kind : all_controllers()) {
            auto ctrl = make_controller(kind, setup);
            LoopLog log = run_tracking(*ctrl, cfg, reference, distance, sc.sweep_duration_s, 0.0, cfg.seed + kNoiseSeed);
            rows.push_back({d, to_string(kind), score(log, false).rmse});
            if (logs) logs->push_back(std::move(log));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

std::string cmd_collect(const config::RunConfig& cfg, const std::string& out_dir) {
    io::ensure_directory(out_dir);
    const Trajectory data = collect(cfg);
    const std::string path = io::join_path(out_dir, "data.csv");
    io::write_trajectory_csv(data, path);
    const json j = {{"command", "collect"},
                    {"config_hash", config::hash(cfg)},
                    {"samples", data.length()},
                    {"dt", cfg.dt},
                    {"data", path}};
    io::write_text(io::join_path(out_dir, "collect.json"), j.dump(2) + "\n");
    return j.dump(2);
}

std::string cmd_train(const config::RunConfig& cfg, const std::string& out_dir) {
    io::ensure_directory(out_dir);
    const Trajectory data = cfg.data_path.empty() ? collect(cfg) : io::read_trajectory_csv(cfg.data_path, cfg.dt);
    json models = json::array();
    for (int horizon : {cfg.control.horizon, cfg.cem.horizon}) {
        const auto t0 = std::chrono::steady_clock::now();
        const hypernet::HyperDnnModel model = train_model(cfg, data, horizon);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::string name = horizon == cfg.control.horizon ? "model.json" : "model_cem.json";
        hypernet::save_model(model, io::join_path(out_dir, name));
        const ModelReport rep = evaluate_model(model, cfg, data);
        models.push_back({{"file", name},
                          {"horizon", horizon},
                          {"train_bfr", rep.train_bfr},
                          {"validation_bfr", rep.validation_bfr},
                          {"epochs", rep.epochs},
                          {"best_epoch", rep.best_epoch},
                          {"train_mse", model.history.train_mse},
                          {"validation_mse", model.history.validation_mse}});
        io::write_text(io::join_path(out_dir, name + ".timing"), io::format_double(secs) + "\n");
        if (horizon == cfg.cem.horizon) break;  // horizons coincide
    }
    const json j = {{"command", "train"}, {"config_hash", config::hash(cfg)}, {"models", models}};
    io::write_text(io::join_path(out_dir, "train_report.json"), j.dump(2) + "\n");
    json brief = j;
    for (auto& m : brief["models"]) {
        m.erase("train_mse");
        m.erase("validation_mse");
    }
    return brief.dump(2);
}

std::string cmd_verify(const config::RunConfig& cfg, const std::string& out_dir, bool& passed) {
    io::ensure_directory(out_dir);
    const Setup setup = prepare(cfg, false);
    const verify::Report rep = verify::run_all(setup);
    passed = rep.all_passed();
    json j = json::parse(rep.to_json());
    j["command"] = "verify";
    j["config_hash"] = config::hash(cfg);
    io::write_text(io::join_path(out_dir, "verify.json"), j.dump(2) + "\n");
    return j.dump(2);
}

std::string cmd_track(const config::RunConfig& cfg, const std::string& out_dir,
                      const std::vector<ControllerKind>& kinds) {
    io::ensure_directory(out_dir);
    const Setup setup = prepare(cfg, false);
    const auto& sc = cfg.scenario;
    auto reference = [&](double t) { return sc.reference.at(t); };
    auto distance = [&](double t) { return sc.distance.at(t); };
    json rows = json::array();
    std::ostringstream timing;
    timing << "controller,mean_cpu_s\n";
    for (auto kind : kinds) {
        auto ctrl = make_controller(kind, setup);
        const LoopLog log = run_tracking(*ctrl, cfg, reference, distance, sc.duration_s,
                                         sc.noise ? sc.noise_sigma : 0.0, cfg.seed + kNoiseSeed);
        const metrics::RunMetrics m = score(log, sc.noise);
        json row = metrics_json(m);
        row.update(loop_summary(log));
        rows.push_back(row);
        io::write_text(io::join_path(out_dir, "track_" + log.controller + ".csv"), loop_csv(log));
        io::write_text(io::join_path(out_dir, "track_" + log.controller + "_timing.csv"), timing_csv(log));
        timing << log.controller << ',' << io::format_double(m.mean_cpu_s) << '\n';
    }
    io::write_text(io::join_path(out_dir, "track_timing.csv"), timing.str());
    const json j = {{"command", "track"}, {"config_hash", config::hash(cfg)}, {"noise", sc.noise}, {"controllers", rows}};
    io::write_text(io::join_path(out_dir, "track_metrics.json"), j.dump(2) + "\n");
    return j.dump(2);
}

std::string cmd_cem(const config::RunConfig& cfg, const std::string& out_dir) {
    io::ensure_directory(out_dir);
    const Setup setup = prepare(cfg, true);
    json rows = json::array();
    for (auto kind : {ControllerKind::npv_deepc, ControllerKind::neural_deepc}) {
        for (bool noisy : {false, true}) {
            auto ctrl = make_cem_controller(kind, setup);
            const LoopLog log = run_cem(*ctrl, cfg, noisy ? cfg.scenario.noise_sigma : 0.0, cfg.seed + kNoiseSeed);
            const CemReport rep = analyse_cem(log, cfg.cem);
            json row = {{"controller", to_string(kind)},
                        {"noise", noisy},
                        {"final_cem", rep.final_cem},
                        {"target", cfg.cem.target},
                        {"reached", rep.reached},
                        {"monotone", rep.monotone},
                        {"safety_violation", rep.overshoot},
                        {"rate_median", rep.rate_median},
                        {"rate_max_deviation", rep.rate_max_deviation}};
            row.update(loop_summary(log));
            rows.push_back(row);
            const std::string stem = "cem_" + to_string(kind) + (noisy ? "_noisy" : "_noise_free");
            io::write_text(io::join_path(out_dir, stem + ".csv"), loop_csv(log));
            io::write_text(io::join_path(out_dir, stem + "_timing.csv"), timing_csv(log));
        }
    }
    const json j = {{"command", "cem"}, {"config_hash", config::hash(cfg)}, {"runs", rows}};
    io::write_text(io::join_path(out_dir, "cem_metrics.json"), j.dump(2) + "\n");
    return j.dump(2);
}

std::string cmd_bench(const config::RunConfig& cfg, const std::string& out_dir) {
    io::ensure_directory(out_dir);
    const Setup setup = prepare(cfg, false);
    std::vector<LoopLog> logs;
    const auto rows = bench(setup, &logs);
    io::write_text(io::join_path(out_dir, "bench_metrics.csv"), metrics::comparison_csv(rows, false));
    io::write_text(io::join_path(out_dir, "bench_cpu.csv"), metrics::comparison_csv(rows, true));
    json table = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        json row = metrics_json(rows[i]);
        row.update(loop_summary(logs[i]));
        table.push_back(row);
    }
    const json j = {{"command", "bench"}, {"config_hash", config::hash(cfg)}, {"rows", table}};
    io::write_text(io::join_path(out_dir, "bench.json"), j.dump(2) + "\n");
    return j.dump(2);
}

std::string cmd_sweep(const config::RunConfig& cfg, const std::string& out_dir) {
    io::ensure_directory(out_dir);
    const Setup setup = prepare(cfg, false);
    const auto rows = sweep(setup);
    std::ostringstream os;
    os << "distance,controller,rmse\n";
    for (const auto& r : rows) os << io::format_double(r.distance) << ',' << r.controller << ',' << io::format_double(r.rmse) << '\n';
    io::write_text(io::join_path(out_dir, "sweep.csv"), os.str());
    json table = json::array();
    for (const auto& r : rows) table.push_back({{"distance", r.distance}, {"controller", r.controller}, {"rmse", r.rmse}});
    const json j = {{"command", "sweep"}, {"config_hash", config::hash(cfg)}, {"rows", table}};
    io::write_text(io::join_path(out_dir, "sweep.json"), j.dump(2) + "\n");
    return j.dump(2);
}

}  // namespace npvdeepc::experiment
