#include <random>

#include <gtest/gtest.h>

#include "npvdeepc/baseline.hpp"
#include "npvdeepc/errors.hpp"

namespace npvdeepc::baseline {
namespace {

using control::ControllerConfig;
using control::PastData;

MatrixXd uniform(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

// Stable two-input two-output ARX(2, 2) system with an offset.
ArxModel true_model() {
    ArxModel m;
    m.na = 2;
    m.nb = 2;
    m.A = {(MatrixXd(2, 2) << 0.5, 0.1, 0.0, 0.4).finished(), (MatrixXd(2, 2) << 0.1, 0.0, 0.05, 0.1).finished()};
    m.B = {(MatrixXd(2, 2) << 0.3, 0.0, 0.1, 0.2).finished(), (MatrixXd(2, 2) << 0.1, 0.05, 0.0, 0.1).finished()};
    m.c = Eigen::Vector2d(0.2, -0.1);
    return m;
}

// Direct recursion of the difference equation, written independently of predict_one.
Trajectory simulate(const ArxModel& m, const MatrixXd& u, double noise = 0.0, std::uint64_t seed = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Trajectory t;
    t.u = u;
    t.p = MatrixXd::Zero(1, u.cols());
    t.y = MatrixXd::Zero(2, u.cols());
    for (int k = 2; k < u.cols(); ++k) {
        for (int r = 0; r < 2; ++r) {
            double acc = m.c(r);
            for (int c = 0; c < 2; ++c)
                acc += m.A[0](r, c) * t.y(c, k - 1) + m.A[1](r, c) * t.y(c, k - 2) + m.B[0](r, c) * u(c, k - 1) +
                       m.B[1](r, c) * u(c, k - 2);
            t.y(r, k) = acc + noise * n(rng);
        }
    }
    return t;
}

ControllerConfig mimo_config() {
    ControllerConfig cfg;
    cfg.t_ini = 3;
    cfg.horizon = 8;
    cfg.Q = Eigen::Vector2d(1.0, 1.0).asDiagonal();
    cfg.P = Eigen::Vector2d(1.0, 1.0).asDiagonal();
    cfg.box.u_lo = Eigen::Vector2d(-5.0, -5.0);
    cfg.box.u_hi = Eigen::Vector2d(5.0, 5.0);
    cfg.box.y_lo = Eigen::Vector2d(-50.0, -50.0);
    cfg.box.y_hi = Eigen::Vector2d(50.0, 50.0);
    return cfg;
}

VectorXd stack(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

TEST(Arx, RecoversTheTrueModel) {
    const ArxModel truth = true_model();
    const ArxModel fit = identify_arx(simulate(truth, uniform(2, 200, 1)), 2, 2);
    for (int i = 0; i < 2; ++i) {
        EXPECT_LT((fit.A[i] - truth.A[i]).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((fit.B[i] - truth.B[i]).cwiseAbs().maxCoeff(), 1e-8);
    }
    EXPECT_LT((fit.c - truth.c).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(fit.residual_rms, 1e-10);
}

TEST(Arx, WhiteNoiseOutputHasNoInputDependence) {
    Trajectory t;
    t.u = uniform(2, 4000, 2);
    t.p = MatrixXd::Zero(1, 4000);
    t.y = uniform(2, 4000, 3);
    const ArxModel fit = identify_arx(t, 1, 1);
    EXPECT_LT(fit.B[0].cwiseAbs().maxCoeff(), 0.1);
    EXPECT_LT(fit.A[0].cwiseAbs().maxCoeff(), 0.1);
    EXPECT_NEAR(fit.residual_rms, 1.0 / std::sqrt(3.0), 0.02);  // std of U(-1, 1)
}

TEST(Arx, RejectsEmptyAndShortRegressors) {
    const Trajectory t = simulate(true_model(), uniform(2, 50, 4));
    try {
        identify_arx(t, 0, 0);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("empty regressor"), std::string::npos);
    }
    EXPECT_THROW(identify_arx(t, -1, 2), ConfigError);
    Trajectory shortened = t;
    shortened.u = t.u.leftCols(6);
    shortened.y = t.y.leftCols(6);
    shortened.p = t.p.leftCols(6);
    EXPECT_THROW(identify_arx(shortened, 2, 2), DataError);
}

TEST(Arx, RolloutIsRepeatedOneStepPrediction) {
    const ArxModel m = true_model();
    const MatrixXd u = uniform(2, 12, 5);
    const Trajectory t = simulate(m, u);
    // Past ends at k = 3; the simulator starts from zero outputs at k = 0, 1.
    const VectorXd y = rollout(m, stack(u.leftCols(4)), stack(t.y.leftCols(4)), stack(u.rightCols(8)));
    EXPECT_LT((y - stack(t.y.rightCols(8))).cwiseAbs().maxCoeff(), 1e-12);

    MatrixXd gamma;
    VectorXd f;
    condensed_prediction(m, stack(u.leftCols(4)), stack(t.y.leftCols(4)), 8, gamma, f);
    const VectorXd uf = stack(uniform(2, 8, 6));
    EXPECT_LT((gamma * uf + f - rollout(m, stack(u.leftCols(4)), stack(t.y.leftCols(4)), uf)).cwiseAbs().maxCoeff(),
              1e-12);
    EXPECT_THROW(predict_one(m, t.y.leftCols(1), u.leftCols(2)), DimensionError);
}

// Closed loop with the exact model as the plant.
struct Loop {
    MatrixXd u, y;
};

Loop closed_loop(MpcController& mpc, const ArxModel& plant, const VectorXd& r, int steps) {
    const int t_ini = 3;
    Loop l{MatrixXd::Zero(2, steps + t_ini), MatrixXd::Zero(2, steps + t_ini)};
    for (int k = t_ini; k < steps + t_ini; ++k) {
        PastData past{stack(l.u.middleCols(k - t_ini, t_ini)), stack(l.y.middleCols(k - t_ini, t_ini)),
                      VectorXd::Zero(t_ini)};
        l.u.col(k) = mpc.step(past, r, l.u.col(k - 1)).u_apply;
        if (k + 1 < steps + t_ini) l.y.col(k + 1) = predict_one(plant, l.y.leftCols(k + 1), l.u.leftCols(k + 1));
    }
    return l;
}

TEST(Mpc, ExactModelHasNoSteadyStateError) {
    const ArxModel m = true_model();
    MpcController mpc(m, mimo_config());
    const VectorXd r = Eigen::Vector2d(1.5, -0.5);
    const Loop l = closed_loop(mpc, m, r, 80);
    EXPECT_LT((l.y.rightCols(1) - r).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_LT((l.u.col(l.u.cols() - 1) - l.u.col(l.u.cols() - 2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mpc, FixedPointNeedsNoInputChange) {
    const ArxModel m = true_model();
    // Steady state: (I - A1 - A2) y = (B1 + B2) u + c.
    const VectorXd u_ss = Eigen::Vector2d(0.7, 1.1);
    const MatrixXd lhs = MatrixXd::Identity(2, 2) - m.A[0] - m.A[1];
    const VectorXd y_ss = lhs.lu().solve((m.B[0] + m.B[1]) * u_ss + m.c);
    MpcController mpc(m, mimo_config());
    const PastData past{control::repeat(u_ss, 3), control::repeat(y_ss, 3), VectorXd::Zero(3)};
    const auto res = mpc.step(past, y_ss, u_ss);
    EXPECT_EQ(res.diag.status, optim::SolveStatus::optimal);
    EXPECT_LT((res.u_pred - control::repeat(u_ss, 8)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT(res.cost, 1e-10);
}

TEST(Mpc, OutputBoxIsRespected) {
    const ArxModel m = true_model();
    ControllerConfig cfg = mimo_config();
    cfg.box.y_hi(0) = 1.0;
    MpcController mpc(m, cfg);
    // The reference lies outside the box: the loop settles on the boundary.
    const Loop l = closed_loop(mpc, m, Eigen::Vector2d(3.0, 0.0), 80);
    EXPECT_LE(l.y.row(0).maxCoeff(), 1.0 + 1e-6);
    EXPECT_NEAR(l.y(0, l.y.cols() - 1), 1.0, 1e-4);
}

TEST(Mpc, RejectsMismatchedSetup) {
    ControllerConfig cfg = mimo_config();
    cfg.t_ini = 1;
    EXPECT_THROW(MpcController(true_model(), cfg), DimensionError);
    ArxModel siso = true_model();
    siso.c = VectorXd::Zero(1);
    EXPECT_THROW(MpcController(siso, mimo_config()), DimensionError);
}

}  // namespace
}  // namespace npvdeepc::baseline
