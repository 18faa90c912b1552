// Micro benchmarks of the per-step building blocks. Models are untrained
// (random initial weights), which does not change the per-step work.
#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "npvdeepc/config.hpp"
#include "npvdeepc/deepc.hpp"
#include "npvdeepc/experiment.hpp"
#include "npvdeepc/hankel.hpp"
#include "npvdeepc/hypernet.hpp"
#include "npvdeepc/npv.hpp"
#include "npvdeepc/optim.hpp"

namespace {

using namespace npvdeepc;

struct Fixture {
    config::RunConfig cfg;
    Trajectory data;
    std::shared_ptr<const hypernet::HyperDnnModel> model;
    HankelSet neural;

    Fixture() {
        data = experiment::collect(cfg);
        neural = partition(data.slice(0, cfg.hankel.neural_points), cfg.control.t_ini, cfg.control.horizon);
        const auto scalers = hypernet::fit_scalers(neural, 2, 2, 1);
        model = std::make_shared<const hypernet::HyperDnnModel>(
            hypernet::initialize(cfg.network(cfg.control.horizon), scalers, cfg.seed));
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void BM_BuildHankel(benchmark::State& state) {
    const auto& f = fixture();
    const int length = static_cast<int>(state.range(0));
    const MatrixXd seq = f.data.u.leftCols(length);
    for (auto _ : state) benchmark::DoNotOptimize(build_hankel(seq, 15));
    state.SetComplexityN(length);
}
BENCHMARK(BM_BuildHankel)->Arg(300)->Arg(1000)->Arg(4000)->Complexity(benchmark::oN);

void BM_DeepcProjector(benchmark::State& state) {
    const auto& f = fixture();
    const HankelSet hs = partition(f.data.slice(0, static_cast<int>(state.range(0))), 5, 10);
    for (auto _ : state) benchmark::DoNotOptimize(deepc::build_projector(hs));
}
BENCHMARK(BM_DeepcProjector)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_TransformHankel(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(npv::transform_hankel(*f.model, f.neural));
}
BENCHMARK(BM_TransformHankel)->Unit(benchmark::kMillisecond);

// Box- and equality-constrained QP with the dimensions of one NPV step.
void BM_SolveQp(benchmark::State& state) {
    const int n = 91, m = 51;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    const MatrixXd a = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    optim::QpProblem qp;
    qp.H = a.transpose() * a / n + MatrixXd::Identity(n, n);
    qp.g = VectorXd::NullaryExpr(n, [&] { return 3.0 * g(rng); });
    qp.A_eq = MatrixXd::NullaryExpr(m, n, [&] { return g(rng); });
    qp.b_eq = VectorXd::NullaryExpr(m, [&] { return 0.1 * g(rng); });
    qp.lower = VectorXd::Constant(n, -0.5);
    qp.upper = VectorXd::Constant(n, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(optim::solve_qp(qp));
}
BENCHMARK(BM_SolveQp)->Unit(benchmark::kMillisecond);

void BM_NpvStep(benchmark::State& state) {
    const auto& f = fixture();
    npv::NpvController ctrl(f.model, npv::transform_hankel(*f.model, f.neural),
                            f.cfg.controller(f.cfg.npv_deepc.lambda_g, f.cfg.npv_deepc.lambda_sigma), npv::Mode::npv,
                            f.cfg.npv_deepc.kernel_slack);
    ctrl.set_warm_start(false);
    const Window w = window_at(f.data, 2000, 5, 10);
    const control::PastData past{w.u_ini, w.y_ini, w.p_hist};
    const VectorXd r = Eigen::Vector2d(37.0, 0.0);
    const VectorXd u_prev = w.u_ini.tail(2);
    for (auto _ : state) benchmark::DoNotOptimize(ctrl.step(past, r, u_prev));
}
BENCHMARK(BM_NpvStep)->Unit(benchmark::kMillisecond);

void BM_TrainEpochs(benchmark::State& state) {
    const auto& f = fixture();
    hypernet::TrainConfig tc = f.cfg.model.train;
    tc.max_epochs = static_cast<int>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(hypernet::train(f.neural, f.cfg.network(f.cfg.control.horizon), tc, f.cfg.seed));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainEpochs)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
