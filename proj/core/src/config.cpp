#include "npvdeepc/config.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/io.hpp"

namespace npvdeepc::config {

using nlohmann::json;

double Schedule::at(double t) const {
    double v = points.front().second;
    for (const auto& [time, value] : points) {
        if (time <= t + 1e-9) v = value;
        else break;
    }
    return v;
}

void Schedule::validate(const std::string& what) const {
    if (points.empty()) throw ConfigError(what + ": schedule needs at least one breakpoint");
    if (points.front().first != 0.0) throw ConfigError(what + ": first breakpoint must be at t = 0");
    for (std::size_t i = 1; i < points.size(); ++i)
        if (!(points[i].first > points[i - 1].first)) throw ConfigError(what + ": breakpoint times must increase");
    for (const auto& p : points)
        if (!std::isfinite(p.first) || !std::isfinite(p.second)) throw ConfigError(what + ": non-finite breakpoint");
}

namespace {

// JSON object reader that remembers which keys were consumed.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        const json* v = find(key);
        if (v == nullptr) return;
        try {
            out = v->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + " has the wrong type");
        }
    }

    void vec(const char* key, Eigen::VectorXd& out) {
        const json* v = find(key);
        if (v == nullptr) return;
        try {
            const auto x = v->get<std::vector<double>>();
            out = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
        } catch (const json::exception&) {
            throw ConfigError(where(key) + " must be a list of numbers");
        }
    }

    void schedule(const char* key, Schedule& out) {
        const json* v = find(key);
        if (v == nullptr) return;
        try {
            const auto pts = v->get<std::vector<std::array<double, 2>>>();
            out.points.clear();
            for (const auto& p : pts) out.points.emplace_back(p[0], p[1]);
        } catch (const json::exception&) {
            throw ConfigError(where(key) + " must be a list of [time, value] pairs");
        }
    }

    std::optional<Reader> section(const char* key) {
        const json* v = find(key);
        if (v == nullptr) return std::nullopt;
        return Reader(*v, path_.empty() ? key : path_ + "." + key);
    }

    void finish() const {
        for (const auto& [key, value] : j_->items())
            if (seen_.count(key) == 0) throw ConfigError("unknown key '" + where(key.c_str()) + "'");
    }

private:
    const json* find(const char* key) {
        seen_.insert(key);
        auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }
    [[nodiscard]] std::string where(const char* key = nullptr) const {
        const std::string base = path_.empty() ? "config" : path_;
        return key == nullptr ? base : (path_.empty() ? std::string(key) : path_ + "." + key);
    }

    const json* j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_box(Reader& r, plant::BoxConstraints& box) {
    r.vec("u_lo", box.u_lo);
    r.vec("u_hi", box.u_hi);
    r.vec("y_lo", box.y_lo);
    r.vec("y_hi", box.y_hi);
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json schedule_json(const Schedule& s) {
    json a = json::array();
    for (const auto& [t, v] : s.points) a.push_back({t, v});
    return a;
}

json box_json(const plant::BoxConstraints& b) {
    return {{"u_lo", vec_json(b.u_lo)}, {"u_hi", vec_json(b.u_hi)}, {"y_lo", vec_json(b.y_lo)}, {"y_hi", vec_json(b.y_hi)}};
}

void read_neural(Reader& r, NeuralSection& s) {
    r.get("lambda_g", s.lambda_g);
    r.get("lambda_sigma", s.lambda_sigma);
    r.get("kernel_slack", s.kernel_slack);
}

json neural_json(const NeuralSection& s) {
    return {{"lambda_g", s.lambda_g}, {"lambda_sigma", s.lambda_sigma}, {"kernel_slack", s.kernel_slack}};
}

}  // namespace

RunConfig parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Reader root(j, "");
    root.get("seed", c.seed);
    root.get("data_path", c.data_path);
    root.get("model_path", c.model_path);
    root.get("cem_model_path", c.cem_model_path);

    if (auto s = root.section("plant")) {
        s->get("a_g", c.plant.a_g);
        s->get("b_g", c.plant.b_g);
        s->get("c_g", c.plant.c_g);
        s->get("a_s", c.plant.a_s);
        s->get("b_s", c.plant.b_s);
        s->get("d0", c.plant.d0);
        s->get("q_h", c.plant.q_h);
        s->get("t_amb", c.plant.t_amb);
        s->get("dt", c.dt);
        s->finish();
    }
    if (auto s = root.section("excitation")) {
        auto& e = c.excitation.signal;
        s->get("n_points", c.excitation.n_points);
        s->vec("u_lo", e.u_lo);
        s->vec("u_hi", e.u_hi);
        s->get("u_hold_min", e.u_hold_min);
        s->get("u_hold_max", e.u_hold_max);
        s->get("d_lo", e.d_lo);
        s->get("d_hi", e.d_hi);
        s->get("d_hold_min", e.d_hold_min);
        s->get("d_hold_max", e.d_hold_max);
        s->finish();
    }
    if (auto s = root.section("model")) {
        s->get("hidden_sizes", c.model.hidden_sizes);
        std::string hi = c.model.hyper_input == hypernet::HyperInput::history ? "history" : "current";
        s->get("hyper_input", hi);
        if (hi != "history" && hi != "current") throw ConfigError("model.hyper_input must be 'history' or 'current'");
        c.model.hyper_input = hi == "history" ? hypernet::HyperInput::history : hypernet::HyperInput::current;
        if (auto t = s->section("train")) {
            auto& tc = c.model.train;
            t->get("learning_rate", tc.learning_rate);
            t->get("beta1", tc.beta1);
            t->get("beta2", tc.beta2);
            t->get("epsilon", tc.epsilon);
            t->get("max_epochs", tc.max_epochs);
            t->get("patience", tc.patience);
            t->get("train_fraction", tc.train_fraction);
            t->get("batch_size", tc.batch_size);
            t->finish();
        }
        s->finish();
    }
    if (auto s = root.section("hankel")) {
        s->get("deepc_points", c.hankel.deepc_points);
        s->get("neural_points", c.hankel.neural_points);
        s->finish();
    }
    if (auto s = root.section("control")) {
        auto& cc = c.control;
        s->get("t_ini", cc.t_ini);
        s->get("horizon", cc.horizon);
        s->vec("Q", cc.Q);
        s->vec("R", cc.R);
        s->vec("P", cc.P);
        s->get("output_constraints", cc.output_constraints);
        if (auto b = s->section("box")) {
            read_box(*b, cc.box);
            b->finish();
        }
        if (auto q = s->section("qp")) {
            q->get("tol", cc.qp.tol);
            q->get("max_iter", cc.qp.max_iter);
            q->get("damping", cc.qp.damping);
            q->finish();
        }
        if (auto q = s->section("sqp")) {
            q->get("tol", cc.sqp.tol);
            q->get("max_iter", cc.sqp.max_iter);
            q->finish();
        }
        s->finish();
    }
    if (auto s = root.section("deepc")) {
        s->get("lambda_g", c.deepc.lambda_g);
        s->get("lambda_sigma", c.deepc.lambda_sigma);
        std::string reg = deepc::to_string(c.deepc.regularizer);
        s->get("regularizer", reg);
        c.deepc.regularizer = deepc::regularizer_from_string(reg);
        s->finish();
    }
    if (auto s = root.section("npv_deepc")) {
        read_neural(*s, c.npv_deepc);
        s->finish();
    }
    if (auto s = root.section("neural_deepc")) {
        read_neural(*s, c.neural_deepc);
        s->finish();
    }
    if (auto s = root.section("mpc")) {
        s->get("na", c.mpc.na);
        s->get("nb", c.mpc.nb);
        s->finish();
    }
    if (auto s = root.section("cem")) {
        auto& cm = c.cem;
        s->get("horizon", cm.horizon);
        s->get("target", cm.target);
        s->get("terminal_weight", cm.terminal_weight);
        s->vec("R", cm.R);
        s->get("ts_backoff", cm.ts_backoff);
        s->get("lambda_g", cm.lambda_g);
        s->get("lambda_sigma", cm.lambda_sigma);
        s->get("duration_s", cm.duration_s);
        s->get("initial_ts", cm.initial_ts);
        s->schedule("distance", cm.distance);
        s->get("perturb_start_s", cm.perturb_start_s);
        s->get("perturb_end_s", cm.perturb_end_s);
        s->finish();
    }
    if (auto s = root.section("scenario")) {
        auto& sc = c.scenario;
        s->get("duration_s", sc.duration_s);
        s->schedule("reference", sc.reference);
        s->schedule("distance", sc.distance);
        s->get("noise_sigma", sc.noise_sigma);
        s->get("noise", sc.noise);
        s->get("nominal_q", sc.nominal_q);
        s->get("sweep_distances", sc.sweep_distances);
        s->schedule("sweep_levels", sc.sweep_levels);
        s->get("sweep_duration_s", sc.sweep_duration_s);
        s->finish();
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig load(const std::string& path) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse(text);
}

std::string to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["data_path"] = c.data_path;
    j["model_path"] = c.model_path;
    j["cem_model_path"] = c.cem_model_path;
    j["plant"] = {{"a_g", c.plant.a_g}, {"b_g", c.plant.b_g}, {"c_g", c.plant.c_g}, {"a_s", c.plant.a_s},
                  {"b_s", c.plant.b_s}, {"d0", c.plant.d0},   {"q_h", c.plant.q_h}, {"t_amb", c.plant.t_amb},
                  {"dt", c.dt}};
    const auto& e = c.excitation.signal;
    j["excitation"] = {{"n_points", c.excitation.n_points},
                       {"u_lo", vec_json(e.u_lo)},
                       {"u_hi", vec_json(e.u_hi)},
                       {"u_hold_min", e.u_hold_min},
                       {"u_hold_max", e.u_hold_max},
                       {"d_lo", e.d_lo},
                       {"d_hi", e.d_hi},
                       {"d_hold_min", e.d_hold_min},
                       {"d_hold_max", e.d_hold_max}};
    const auto& tc = c.model.train;
    j["model"] = {{"hidden_sizes", c.model.hidden_sizes},
                  {"hyper_input", c.model.hyper_input == hypernet::HyperInput::history ? "history" : "current"},
                  {"train",
                   {{"learning_rate", tc.learning_rate},
                    {"beta1", tc.beta1},
                    {"beta2", tc.beta2},
                    {"epsilon", tc.epsilon},
                    {"max_epochs", tc.max_epochs},
                    {"patience", tc.patience},
                    {"train_fraction", tc.train_fraction},
                    {"batch_size", tc.batch_size}}}};
    j["hankel"] = {{"deepc_points", c.hankel.deepc_points}, {"neural_points", c.hankel.neural_points}};
    const auto& cc = c.control;
    j["control"] = {{"t_ini", cc.t_ini},
                    {"horizon", cc.horizon},
                    {"Q", vec_json(cc.Q)},
                    {"R", vec_json(cc.R)},
                    {"P", vec_json(cc.P)},
                    {"output_constraints", cc.output_constraints},
                    {"box", box_json(cc.box)},
                    {"qp", {{"tol", cc.qp.tol}, {"max_iter", cc.qp.max_iter}, {"damping", cc.qp.damping}}},
                    {"sqp", {{"tol", cc.sqp.tol}, {"max_iter", cc.sqp.max_iter}}}};
    j["deepc"] = {{"lambda_g", c.deepc.lambda_g},
                  {"lambda_sigma", c.deepc.lambda_sigma},
                  {"regularizer", deepc::to_string(c.deepc.regularizer)}};
    j["npv_deepc"] = neural_json(c.npv_deepc);
    j["neural_deepc"] = neural_json(c.neural_deepc);
    j["mpc"] = {{"na", c.mpc.na}, {"nb", c.mpc.nb}};
    const auto& cm = c.cem;
    j["cem"] = {{"horizon", cm.horizon},
                {"target", cm.target},
                {"terminal_weight", cm.terminal_weight},
                {"R", vec_json(cm.R)},
                {"ts_backoff", cm.ts_backoff},
                {"lambda_g", cm.lambda_g},
                {"lambda_sigma", cm.lambda_sigma},
                {"duration_s", cm.duration_s},
                {"initial_ts", cm.initial_ts},
                {"distance", schedule_json(cm.distance)},
                {"perturb_start_s", cm.perturb_start_s},
                {"perturb_end_s", cm.perturb_end_s}};
    const auto& sc = c.scenario;
    j["scenario"] = {{"duration_s", sc.duration_s},
                     {"reference", schedule_json(sc.reference)},
                     {"distance", schedule_json(sc.distance)},
                     {"noise_sigma", sc.noise_sigma},
                     {"noise", sc.noise},
                     {"nominal_q", sc.nominal_q},
                     {"sweep_distances", sc.sweep_distances},
                     {"sweep_levels", schedule_json(sc.sweep_levels)},
                     {"sweep_duration_s", sc.sweep_duration_s}};
    return j.dump(2);
}

std::string hash(const RunConfig& cfg) {
    std::uint64_t h = 14695981039346656037ULL;  // FNV-1a 64 offset basis
    for (const unsigned char ch : to_json(cfg)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::validate() const {
    if (!(dt > 0.0)) throw ConfigError("plant.dt must be positive");
    excitation.signal.validate();
    if (excitation.n_points < control.t_ini + control.horizon + 1)
        throw ConfigError("excitation.n_points must be at least T_ini + N + 1");
    if (model.hidden_sizes.empty()) throw ConfigError("model.hidden_sizes must not be empty");
    for (int s : model.hidden_sizes)
        if (s < 1) throw ConfigError("model.hidden_sizes entries must be positive");
    if (control.Q.size() != 2 || control.P.size() != 2 || control.R.size() != 2)
        throw ConfigError("control.Q, control.R and control.P must have two diagonal entries");
    if (cem.R.size() != 2) throw ConfigError("cem.R must have two diagonal entries");
    if (control.t_ini < 1 || control.horizon < 1) throw ConfigError("control.t_ini and control.horizon must be >= 1");
    if (cem.horizon < 1) throw ConfigError("cem.horizon must be >= 1");
    const int depth = control.t_ini + control.horizon;
    if (hankel.deepc_points < depth || hankel.neural_points < depth)
        throw ConfigError("hankel point counts must cover T_ini + N samples");
    if (hankel.deepc_points > excitation.n_points || hankel.neural_points > excitation.n_points)
        throw ConfigError("hankel point counts exceed excitation.n_points");
    if (mpc.na < 0 || mpc.nb < 0 || std::max(mpc.na, mpc.nb) > control.t_ini)
        throw ConfigError("mpc orders must lie in [0, T_ini]");
    if (!(scenario.duration_s > 0.0) || !(scenario.sweep_duration_s > 0.0) || !(cem.duration_s > 0.0))
        throw ConfigError("scenario durations must be positive");
    if (!(scenario.noise_sigma >= 0.0)) throw ConfigError("scenario.noise_sigma must be >= 0");
    scenario.reference.validate("scenario.reference");
    scenario.distance.validate("scenario.distance");
    scenario.sweep_levels.validate("scenario.sweep_levels");
    cem.distance.validate("cem.distance");
    for (const auto& sched : {scenario.distance, cem.distance})
        for (const auto& p : sched.points)
            if (p.second < plant::kMinDistance || p.second > plant::kMaxDistance)
                throw ConfigError("distance schedules must stay inside [2, 7] mm");
    for (double d : scenario.sweep_distances)
        if (d < plant::kMinDistance || d > plant::kMaxDistance)
            throw ConfigError("scenario.sweep_distances must lie inside [2, 7] mm");
    if (!(cem.target > 0.0) || !(cem.terminal_weight > 0.0) || !(cem.ts_backoff >= 0.0))
        throw ConfigError("cem.target and cem.terminal_weight must be positive, cem.ts_backoff >= 0");
    if (!(cem.perturb_start_s < cem.perturb_end_s)) throw ConfigError("cem perturbation window is empty");
    controller(deepc.lambda_g, deepc.lambda_sigma).validate();
}

control::ControllerConfig RunConfig::controller(double lambda_g, double lambda_sigma) const {
    control::ControllerConfig cc;
    cc.horizon = control.horizon;
    cc.t_ini = control.t_ini;
    cc.Q = control.Q.asDiagonal();
    cc.R = control.R.asDiagonal();
    cc.P = control.P.asDiagonal();
    cc.lambda_g = lambda_g;
    cc.lambda_sigma = lambda_sigma;
    cc.box = control.box;
    cc.output_constraints = control.output_constraints;
    cc.qp = control.qp;
    cc.sqp = control.sqp;
    cc.sqp.qp = control.qp;
    return cc;
}

hypernet::NetworkSpec RunConfig::network(int horizon) const {
    hypernet::NetworkSpec spec;
    spec.dims.t_ini = control.t_ini;
    spec.dims.horizon = horizon;
    spec.dims.hyper_input = model.hyper_input;
    spec.hidden_sizes = model.hidden_sizes;
    spec.modulated.assign(model.hidden_sizes.size(), true);
    return spec;
}

}  // namespace npvdeepc::config
