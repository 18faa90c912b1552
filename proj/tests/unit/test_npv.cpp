#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/npv.hpp"
#include "npvdeepc/plant.hpp"

namespace npvdeepc::npv {
namespace {

using control::ControllerConfig;
using control::PastData;
using hypernet::HyperDnnModel;
using hypernet::ModelDims;
using hypernet::Scaler;

MatrixXd uniform(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

ModelDims dims(int t_ini, int horizon) {
    ModelDims d;
    d.t_ini = t_ini;
    d.horizon = horizon;
    d.n_u = 2;
    d.n_y = 2;
    d.n_p = 1;
    return d;
}

Scaler unit_scaler(int channels) { return Scaler{VectorXd::Constant(channels, -1.0), VectorXd::Constant(channels, 1.0)}; }

// Random hypernet model in unit coordinates with one hidden layer.
std::shared_ptr<HyperDnnModel> random_model(const ModelDims& d, int hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto m = std::make_shared<HyperDnnModel>();
    m->dims = d;
    m->scalers = {unit_scaler(d.n_u), unit_scaler(d.n_y), unit_scaler(d.n_p)};
    hypernet::HiddenLayer l;
    l.in = d.nn_input_size();
    l.out = hidden;
    l.G = uniform(hidden, (d.hyper_input_size() + 1) * (l.in + 1), rng, 0.5);
    m->layers.push_back(l);
    m->W_o = uniform(d.nn_output_size(), hidden, rng);
    m->b_o = uniform(d.nn_output_size(), 1, rng);
    m->validate();
    return m;
}

// Two-input two-output nonlinear data with a scheduling channel.
Trajectory toy_data(int length, std::uint64_t seed, bool constant_p = false) {
    std::mt19937_64 rng(seed);
    Trajectory t;
    t.u = uniform(2, length, rng);
    t.p = constant_p ? MatrixXd::Constant(1, length, 0.3) : uniform(1, length, rng);
    t.y = MatrixXd::Zero(2, length);
    for (int k = 0; k + 1 < length; ++k) {
        t.y(0, k + 1) = 0.6 * t.y(0, k) + 0.4 * std::tanh(t.u(0, k) * (1.0 + 0.5 * t.p(0, k)));
        t.y(1, k + 1) = 0.5 * t.y(1, k) + 0.3 * t.u(1, k) + 0.2 * t.y(0, k);
    }
    return t;
}

ControllerConfig unit_config(int t_ini, int horizon) {
    ControllerConfig cfg;
    cfg.t_ini = t_ini;
    cfg.horizon = horizon;
    cfg.box.u_lo = Eigen::Vector2d(-1.0, -1.0);
    cfg.box.u_hi = Eigen::Vector2d(1.0, 1.0);
    cfg.box.y_lo = Eigen::Vector2d(-10.0, -10.0);
    cfg.box.y_hi = Eigen::Vector2d(10.0, 10.0);
    return cfg;
}

PastData past_of(const Window& w) { return {w.u_ini, w.y_ini, w.p_hist}; }

TEST(TransformHankel, ShapeColumnsAndRank) {
    const ModelDims d = dims(2, 3);
    const auto m = random_model(d, 8, 1);
    const HankelSet hs = partition(toy_data(60, 2), 2, 3);
    const NeuralHankel nh = transform_hankel(*m, hs);
    ASSERT_EQ(nh.Phi_HL.rows(), 8);
    ASSERT_EQ(nh.Phi_HL.cols(), hs.cols());
    EXPECT_EQ(nh.lifted_rank, 9);
    for (int c : {0, 17, hs.cols() - 1}) {
        const VectorXd direct = hypernet::phi_hl(*m, hypernet::make_nn_input(column_window(hs, c)));
        EXPECT_LT((nh.Phi_HL.col(c) - direct).cwiseAbs().maxCoeff(), 1e-12);
    }
    // M is a right inverse of the full-row-rank lifted matrix.
    EXPECT_LT((nh.lifted() * nh.M - MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-9);
    // Frozen mode uses one parameter for every column.
    const VectorXd p0 = VectorXd::Constant(2, 0.2);
    const NeuralHankel frozen = transform_hankel(*m, hs, p0);
    const VectorXd direct = hypernet::FrozenNetwork(*m, p0).features(hs.past_and_future_inputs().col(5));
    EXPECT_LT((frozen.Phi_HL.col(5) - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TransformHankel, RankDeficiencyIsReported) {
    const ModelDims d = dims(2, 3);
    auto m = random_model(d, 8, 3);
    const HankelSet full = partition(toy_data(60, 4), 2, 3);
    HankelSet few = full;
    for (MatrixXd* b : {&few.Up, &few.Yp, &few.Uf, &few.Yf, &few.Pp}) *b = b->leftCols(6).eval();
    try {
        transform_hankel(*m, few);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("rank deficient"), std::string::npos);
    }
    m->layers[0].G.setZero();
    EXPECT_THROW(transform_hankel(*m, full), DataError);
}

TEST(ProblemSize, DefaultDimensionsWithSlack) {
    const ModelDims d = dims(5, 10);
    const auto m = random_model(d, 30, 5);
    const NeuralHankel nh = transform_hankel(*m, partition(toy_data(150, 6), 5, 10));
    // Variables col(u, y, g~, s): (n_u + 2 n_y) N + nu_L + 1 with the kernel slack s.
    const NpvController slack(m, nh, ControllerConfig{}, Mode::npv, true);
    const ProblemSize s = slack.problem_size();
    EXPECT_EQ(s.variables, (2 + 2 * 2) * 10 + 30 + 1);
    EXPECT_EQ(s.variables, 91);
    EXPECT_EQ(s.equalities, 2 * 10 + 30 + 1);
    EXPECT_EQ(s.equalities, 51);
    EXPECT_EQ(s.inequalities, 2 * (2 + 2) * 10);
    // Without the slack the kernel constraint is hard and s disappears.
    const NpvController plain(m, nh, ControllerConfig{}, Mode::npv, false);
    EXPECT_EQ(plain.problem_size().variables, 60);
    EXPECT_EQ(plain.problem_size().equalities, 51);
    EXPECT_EQ(plain.problem_size().inequalities, 80);
}

// Data whose future outputs are exactly affine in the features: E = 0.
struct SyntheticCase {
    std::shared_ptr<HyperDnnModel> model;
    HankelSet hs;
    NeuralHankel nh;
};

SyntheticCase synthetic_case(std::uint64_t seed) {
    SyntheticCase c;
    const ModelDims d = dims(2, 3);
    c.model = random_model(d, 8, seed);
    c.hs = partition(toy_data(60, seed + 1), 2, 3);
    for (int col = 0; col < c.hs.cols(); ++col) c.hs.Yf.col(col) = hypernet::predict_nls(*c.model, column_window(c.hs, col));
    c.nh = transform_hankel(*c.model, c.hs);
    return c;
}

TEST(AffineResidual, SyntheticDataHasNoResidual) {
    const SyntheticCase c = synthetic_case(10);
    const ResidualReport rep = affine_residual(c.nh);
    EXPECT_LT(rep.E.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(rep.max_null_violation, 1e-10);
    EXPECT_EQ(rep.null_dim, c.hs.cols() - 9);
}

TEST(AffineResidual, NoisyDataViolatesTheNullCondition) {
    SyntheticCase c = synthetic_case(11);
    std::mt19937_64 rng(12);
    c.hs.Yf += 0.1 * uniform(static_cast<int>(c.hs.Yf.rows()), c.hs.cols(), rng);
    const ResidualReport rep = affine_residual(transform_hankel(*c.model, c.hs));
    EXPECT_GT(rep.max_null_violation, 1e-3);
}

TEST(AffineResidual, SquareStackHasTrivialNullSpace) {
    SyntheticCase c = synthetic_case(13);
    for (MatrixXd* b : {&c.hs.Up, &c.hs.Yp, &c.hs.Uf, &c.hs.Yf, &c.hs.Pp}) *b = b->leftCols(9).eval();
    const ResidualReport rep = affine_residual(transform_hankel(*c.model, c.hs));
    EXPECT_EQ(rep.null_dim, 0);
    EXPECT_EQ(rep.max_null_violation, 0.0);
}

TEST(AffineResidual, ConstrainedPredictionEqualsNls) {
    const SyntheticCase c = synthetic_case(14);
    const NpvController ctrl(c.model, c.nh, unit_config(2, 3), Mode::npv);
    std::mt19937_64 rng(15);
    const Trajectory fresh = toy_data(40, 16);
    for (int s = 0; s < 30; s += 3) {
        Window w = window_at(fresh, s, 2, 3);
        w.u_f = uniform(6, 1, rng);
        const VectorXd y = ctrl.predict(past_of(w), w.u_f, VectorXd::Zero(6));
        EXPECT_LT((y - hypernet::predict_nls(*c.model, w)).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(NpvStep, LargeLambdaPinsPredictionToTheModel) {
    const ModelDims d = dims(2, 3);
    const auto m = random_model(d, 8, 20);
    const HankelSet hs = partition(toy_data(80, 21), 2, 3);
    ControllerConfig cfg = unit_config(2, 3);
    cfg.lambda_g = 1e12;
    NpvController ctrl(m, transform_hankel(*m, hs), cfg, Mode::npv);
    const Window w = window_at(toy_data(20, 22), 3, 2, 3);
    const auto res = ctrl.step(past_of(w), Eigen::Vector2d(0.3, 0.1), w.u_ini.tail(2));
    EXPECT_LT(res.g.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((res.y_pred - ctrl.predict(past_of(w), res.u_pred, VectorXd::Zero(6))).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(NpvStep, SolutionIsConsistentAndFeasible) {
    const ModelDims d = dims(2, 3);
    const auto m = random_model(d, 8, 30);
    const HankelSet hs = partition(toy_data(80, 31), 2, 3);
    const NeuralHankel nh = transform_hankel(*m, hs);
    const ControllerConfig cfg = unit_config(2, 3);
    NpvController ctrl(m, nh, cfg, Mode::npv);
    const Window w = window_at(toy_data(20, 32), 4, 2, 3);
    const VectorXd r = Eigen::Vector2d(0.5, -0.2), u_prev = w.u_ini.tail(2);
    const auto res = ctrl.step(past_of(w), r, u_prev);
    EXPECT_EQ(res.diag.status, optim::SolveStatus::optimal);
    // Prediction recomputed from public pieces.
    VectorXd lifted(9);
    lifted << hypernet::phi_hl(*m, {(VectorXd(w.u_ini.size() + w.y_ini.size() + res.u_pred.size()) << w.u_ini, w.y_ini, res.u_pred).finished(), w.p_hist}), 1.0;
    EXPECT_LT((res.y_pred - (nh.theta_ls * lifted + res.g)).cwiseAbs().maxCoeff(), 1e-8);
    // Kernel constraint holds up to the slack.
    EXPECT_LT((nh.Kmat * res.g - res.slack).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_NEAR(res.cost, control::tracking_cost(cfg, r, u_prev).value(res.u_pred, res.y_pred), 1e-8);
    EXPECT_TRUE((res.u_pred.array().abs() <= 1.0).all());
    // The problem's analytic derivatives agree with central differences.
    const optim::NlpProblem p = ctrl.build_problem(past_of(w), r, u_prev);
    const VectorXd x0 = ctrl.initial_point(past_of(w), u_prev);
    EXPECT_LT(optim::jacobian_fd_error(p.constraints, p.constraint_jacobian, x0), 1e-6);
    auto grad_as_jac = [&](const VectorXd& x) -> MatrixXd { return p.gradient(x).transpose(); };
    auto obj_as_vec = [&](const VectorXd& x) -> VectorXd { return VectorXd::Constant(1, p.objective(x)); };
    EXPECT_LT(optim::jacobian_fd_error(obj_as_vec, grad_as_jac, x0), 1e-6);
}

TEST(NpvStep, WarmStartReachesTheSameSolution) {
    const ModelDims d = dims(2, 3);
    const auto m = random_model(d, 8, 40);
    const NeuralHankel nh = transform_hankel(*m, partition(toy_data(80, 41), 2, 3));
    NpvController warm(m, nh, unit_config(2, 3), Mode::npv);
    NpvController cold(m, nh, unit_config(2, 3), Mode::npv);
    cold.set_warm_start(false);
    const Trajectory fresh = toy_data(40, 42);
    for (int s = 0; s < 10; ++s) {
        const Window w = window_at(fresh, s, 2, 3);
        const VectorXd r = Eigen::Vector2d(0.4, 0.0), u_prev = w.u_ini.tail(2);
        const auto a = warm.step(past_of(w), r, u_prev);
        const auto b = cold.step(past_of(w), r, u_prev);
        EXPECT_NEAR(a.objective, b.objective, 1e-5 * (1.0 + std::abs(b.objective)));
    }
}

TEST(NeuralMode, MatchesNpvWhenTheParameterIsConstant) {
    const ModelDims d = dims(2, 3);
    const auto m = random_model(d, 8, 50);
    const HankelSet hs = partition(toy_data(80, 51, true), 2, 3);
    const VectorXd p0 = VectorXd::Constant(2, 0.3);
    EXPECT_LT((mean_parameter(hs) - p0).cwiseAbs().maxCoeff(), 1e-14);
    NpvController npv(m, transform_hankel(*m, hs), unit_config(2, 3), Mode::npv);
    NpvController neural(m, transform_hankel(*m, hs, p0), unit_config(2, 3), Mode::neural);
    EXPECT_EQ(npv.problem_size().variables, neural.problem_size().variables);
    const Window w = window_at(toy_data(20, 52, true), 2, 2, 3);
    const auto a = npv.step(past_of(w), Eigen::Vector2d(0.2, 0.2), w.u_ini.tail(2));
    const auto b = neural.step(past_of(w), Eigen::Vector2d(0.2, 0.2), w.u_ini.tail(2));
    EXPECT_LT((a.u_pred - b.u_pred).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_THROW(NpvController(m, transform_hankel(*m, hs), unit_config(2, 3), Mode::neural), DimensionError);
}

TEST(Dose, SmoothSwitch) {
    EXPECT_DOUBLE_EQ(kappa_smooth(35.0), 0.25);
    const double dt = 0.5 / 60.0;
    // Away from the switch the smooth increment matches the plant's dose update.
    const double hard = plant::cem_update(0.0, 41.0, dt);
    EXPECT_NEAR(cem_increment_smooth(41.0, dt), hard / (1.0 + std::exp(-12.0)), 1e-12 * hard);
    EXPECT_NEAR(cem_increment_smooth(45.0, dt), plant::cem_update(0.0, 45.0, dt), 1e-7 * plant::cem_update(0.0, 45.0, dt));
    EXPECT_LT(cem_increment_smooth(30.0, dt), 1e-6 * dt);
    for (double ts : {33.0, 35.0, 36.2, 40.0, 44.0}) {
        const double h = 1e-6;
        const double fd = (cem_increment_smooth(ts + h, dt) - cem_increment_smooth(ts - h, dt)) / (2.0 * h);
        EXPECT_NEAR(cem_increment_smooth_derivative(ts, dt), fd, 1e-6 * std::abs(fd) + 1e-14);
        EXPECT_GT(cem_increment_smooth(ts, dt), 0.0);
    }
}

TEST(Dose, PredictedDoseIsMonotone) {
    const ModelDims d = dims(2, 3);
    const auto m = random_model(d, 8, 60);
    auto inner = std::make_shared<NpvController>(m, transform_hankel(*m, partition(toy_data(80, 61), 2, 3)),
                                                 unit_config(2, 3), Mode::npv);
    CemController cem(inner, CemSettings{});
    VectorXd y(6);
    y << 36.0, 40.0, 38.0, 41.0, 42.0, 39.0;
    const double total = cem.predicted_cem(0.05, y);
    EXPECT_GT(total, 0.05);
    VectorXd hotter = y;
    hotter(2) += 1.0;
    EXPECT_GT(cem.predicted_cem(0.05, hotter), total);
    // Only the surface channel contributes.
    VectorXd other = y;
    other(3) += 5.0;
    EXPECT_EQ(cem.predicted_cem(0.05, other), total);
    CemSettings bad;
    bad.target = 0.0;
    EXPECT_THROW(CemController(inner, bad), ConfigError);
}

}  // namespace
}  // namespace npvdeepc::npv
