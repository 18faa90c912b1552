#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npvdeepc/config.hpp"
#include "npvdeepc/errors.hpp"
#include "npvdeepc/experiment.hpp"

namespace {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kConfig = 2,
    kData = 3,
    kSolver = 4,
    kVerification = 5,
};

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "results";
    std::string data_path;
    std::string model_path;
    std::string cem_model_path;
    std::vector<std::string> controllers;
    std::optional<bool> noise;
};

npvdeepc::config::RunConfig resolve(const Options& opt) {
    npvdeepc::config::RunConfig cfg =
        opt.config_path.empty() ? npvdeepc::config::RunConfig{} : npvdeepc::config::load(opt.config_path);
    if (opt.seed) cfg.seed = *opt.seed;
    if (!opt.data_path.empty()) cfg.data_path = opt.data_path;
    if (!opt.model_path.empty()) cfg.model_path = opt.model_path;
    if (!opt.cem_model_path.empty()) cfg.cem_model_path = opt.cem_model_path;
    if (opt.noise) cfg.scenario.noise = *opt.noise;
    cfg.validate();
    return cfg;
}

int run(const std::string& command, const Options& opt) {
    namespace ex = npvdeepc::experiment;
    const npvdeepc::config::RunConfig cfg = resolve(opt);
    if (command == "config") {
        std::cout << npvdeepc::config::to_json(cfg) << '\n';
        return kOk;
    }
    if (command == "collect") std::cout << ex::cmd_collect(cfg, opt.out_dir) << '\n';
    else if (command == "train") std::cout << ex::cmd_train(cfg, opt.out_dir) << '\n';
    else if (command == "verify") {
        bool passed = false;
        std::cout << ex::cmd_verify(cfg, opt.out_dir, passed) << '\n';
        if (!passed) {
            std::cerr << "verification failed\n";
            return kVerification;
        }
    } else if (command == "track") {
        std::vector<ex::ControllerKind> kinds;
        for (const auto& name : opt.controllers) kinds.push_back(ex::controller_from_string(name));
        if (kinds.empty()) kinds = ex::all_controllers();
        std::cout << ex::cmd_track(cfg, opt.out_dir, kinds) << '\n';
    } else if (command == "cem") std::cout << ex::cmd_cem(cfg, opt.out_dir) << '\n';
    else if (command == "bench") std::cout << ex::cmd_bench(cfg, opt.out_dir) << '\n';
    else if (command == "sweep") std::cout << ex::cmd_sweep(cfg, opt.out_dir) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter-varying data-enabled predictive control experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;
    app.add_option("--config", opt.config_path, "JSON run configuration (defaults when omitted)")->check(CLI::ExistingFile);
    app.add_option("--seed", opt.seed, "Overrides the configured seed");
    app.add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
    app.add_option("--data", opt.data_path, "Trajectory CSV to use instead of collecting");
    app.add_option("--model", opt.model_path, "Tracking model file to use instead of training");
    app.add_option("--cem-model", opt.cem_model_path, "Dose model file to use instead of training");

    app.add_subcommand("config", "Print the resolved configuration");
    app.add_subcommand("collect", "Collect open-loop excitation data");
    app.add_subcommand("train", "Train the tracking and dose models");
    app.add_subcommand("verify", "Run the structural verification suite");
    auto* track = app.add_subcommand("track", "Closed-loop tracking scenario");
    track->add_option("--controller", opt.controllers, "npv_deepc, neural_deepc, deepc or mpc (repeatable)");
    track->add_option("--noise", opt.noise, "Measurement noise on (true) or off (false)");
    app.add_subcommand("cem", "Thermal-dose scenario");
    app.add_subcommand("bench", "All controllers, noise free and noisy");
    app.add_subcommand("sweep", "Fixed-distance sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        return run(app.get_subcommands().front()->get_name(), opt);
    } catch (const npvdeepc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const npvdeepc::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const npvdeepc::DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const npvdeepc::SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    } catch (const npvdeepc::DivergenceError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInternal;
    }
}
