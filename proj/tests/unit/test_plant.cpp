#include <cmath>

#include <gtest/gtest.h>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/io.hpp"
#include "npvdeepc/plant.hpp"

namespace npvdeepc::plant {
namespace {

// Fixed point of the two recursions, written out from the ODE right-hand sides.
Eigen::Vector2d steady_oracle(const SurrogateParams& c, double P, double q, double d) {
    const double tg = c.t_amb + c.b_g * P / (1.0 + c.c_g * q) / c.a_g;
    const double ts = c.t_amb + c.b_s * std::exp(-(d - 2.0) / c.d0) * (tg - c.t_amb) * q / (q + c.q_h) / c.a_s;
    return {ts, tg};
}

TEST(Surrogate, GasSteadyStateAtFullPowerLowFlow) {
    const Eigen::Vector2d ss = surrogate_steady_state({}, Eigen::Vector2d(8.0, 1.0), 2.0);
    EXPECT_NEAR(ss(1), 25.0 + 10.0 * 8.0 / 1.5, 1e-12);
    EXPECT_NEAR(ss(1), 78.33, 5e-3);
}

TEST(Surrogate, SteadyStateAtLowPowerHighFlowFarAway) {
    SurrogateParams weak;
    weak.b_s = 0.075;
    const Eigen::Vector2d ss = surrogate_steady_state(weak, Eigen::Vector2d(1.5, 6.0), 7.0);
    EXPECT_NEAR(ss(1), 28.75, 1e-12);
    EXPECT_NEAR(ss(0), 25.27, 5e-3);
    const Eigen::Vector2d ours = surrogate_steady_state({}, Eigen::Vector2d(1.5, 6.0), 7.0);
    EXPECT_NEAR(ours(0), steady_oracle({}, 1.5, 6.0, 7.0)(0), 1e-12);
}

TEST(Surrogate, SimulationConvergesToClosedFormSteadyState) {
    const SurrogateParams c;
    for (double d : {2.0, 4.5, 7.0}) {
        SurrogatePlant p(c, PlantState{30.0, 40.0, 0.0, d}, 0.5);
        const Eigen::Vector2d u(5.0, 3.0);
        for (int k = 0; k < 2000; ++k) p.step(u, d);
        EXPECT_NEAR(p.output()(0), steady_oracle(c, 5.0, 3.0, d)(0), 1e-9);
        EXPECT_NEAR(p.output()(1), steady_oracle(c, 5.0, 3.0, d)(1), 1e-9);
    }
}

TEST(Surrogate, WithoutGainsStateDecaysToAmbient) {
    SurrogateParams c;
    c.b_g = 0.0;
    c.b_s = 0.0;
    PlantState s{60.0, 90.0, 0.0, 3.0};
    for (int k = 0; k < 1000; ++k) s = surrogate_step(c, s, Eigen::Vector2d(8.0, 6.0), 3.0, 0.5);
    EXPECT_NEAR(s.Ts, 25.0, 1e-9);
    EXPECT_NEAR(s.Tg, 25.0, 1e-9);
}

TEST(Surrogate, OneStepMatchesExplicitEuler) {
    const SurrogateParams c;
    const PlantState s{36.0, 45.0, 0.0, 3.0};
    const PlantState n = surrogate_step(c, s, Eigen::Vector2d(4.0, 2.5), 3.5, 0.5);
    const double tg = 45.0 + 0.5 * (-0.3 * 20.0 + 3.0 * 4.0 / (1.0 + 0.5 * 2.5));
    const double ts = 36.0 + 0.5 * (-0.15 * 11.0 + 0.3 * std::exp(-1.5 / 3.0) * 20.0 * 2.5 / 4.5);
    EXPECT_NEAR(n.Tg, tg, 1e-12);
    EXPECT_NEAR(n.Ts, ts, 1e-12);
    EXPECT_DOUBLE_EQ(n.d, 3.5);
}

TEST(Surrogate, InputsAndDistanceAreClipped) {
    const SurrogateParams c;
    const PlantState s{36.0, 45.0, 0.0, 3.0};
    const PlantState a = surrogate_step(c, s, Eigen::Vector2d(20.0, 0.0), 9.0, 0.5);
    const PlantState b = surrogate_step(c, s, Eigen::Vector2d(8.0, 1.0), 7.0, 0.5);
    EXPECT_DOUBLE_EQ(a.Ts, b.Ts);
    EXPECT_DOUBLE_EQ(a.Tg, b.Tg);
    EXPECT_DOUBLE_EQ(a.d, 7.0);
}

TEST(Surrogate, NonFiniteInputIsRejected) {
    EXPECT_THROW(surrogate_step({}, PlantState{}, Eigen::Vector2d(NAN, 1.0), 3.0, 0.5), DataError);
}

TEST(Surrogate, GasSteadyStatesStayInsideTheBandOverTheBox) {
    const SurrogateParams c;
    int points = 0;
    for (int i = 0; i <= 10; ++i)
        for (int j = 0; j <= 10; ++j)
            for (int k = 0; k <= 10; ++k) {
                const double P = 1.5 + 6.5 * i / 10.0, q = 1.0 + 5.0 * j / 10.0, d = 2.0 + 5.0 * k / 10.0;
                const Eigen::Vector2d ss = surrogate_steady_state(c, Eigen::Vector2d(P, q), d);
                EXPECT_GE(ss(1), 20.0);
                EXPECT_LE(ss(1), 80.0);
                ++points;
            }
    EXPECT_GE(points, 1000);
}

TEST(Surrogate, ReachableSurfaceEnvelopeStraddlesTheConstraint) {
    const SurrogateParams c;
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const double P = 1.5 + 6.5 * i / 20.0, q = 1.0 + 5.0 * j / 20.0;
            for (double d : {2.0, 7.0}) {
                const double ts = surrogate_steady_state(c, Eigen::Vector2d(P, q), d)(0);
                lo = std::min(lo, ts);
                hi = std::max(hi, ts);
            }
        }
    EXPECT_LT(lo, 42.5);
    EXPECT_GT(hi, 42.5);
}

TEST(Surrogate, SensitivityIsBoundedOnTheBox) {
    const SurrogateParams c;
    const PlantState s{38.0, 50.0, 0.0, 4.0};
    const double h = 1e-6;
    for (double P : {1.5, 4.0, 8.0})
        for (double q : {1.0, 3.0, 6.0})
            for (double d : {2.0, 4.0, 7.0}) {
                const PlantState base = surrogate_step(c, s, Eigen::Vector2d(P, q), d, 0.5);
                const double dp = std::abs(surrogate_step(c, s, Eigen::Vector2d(P - h, q), d, 0.5).Ts - base.Ts) / h;
                const double dq = std::abs(surrogate_step(c, s, Eigen::Vector2d(P, q - h), d, 0.5).Tg - base.Tg) / h;
                const double dd = std::abs(surrogate_step(c, s, Eigen::Vector2d(P, q), d - h, 0.5).Ts - base.Ts) / h;
                EXPECT_LT(dp + dq + dd, 50.0);
            }
}

TEST(Cem, ExamplesFromTheRecursion) {
    EXPECT_DOUBLE_EQ(cem_update(0.0, 43.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(cem_update(0.4, 30.0, 1.0), 0.4);
    EXPECT_DOUBLE_EQ(cem_update(0.0, 41.0, 0.5), 0.125);
    EXPECT_DOUBLE_EQ(cem_update(0.0, 35.0, 1.0), std::pow(0.5, 8.0));
    EXPECT_DOUBLE_EQ(cem_update(0.0, 34.999, 1.0), 0.0);
}

TEST(Cem, MonotoneInDoseAndTemperature) {
    double prev = -1.0;
    for (double ts = 35.0; ts <= 45.0; ts += 0.25) {
        const double v = cem_update(0.1, ts, 0.5 / 60.0);
        EXPECT_GT(v, prev);
        EXPECT_GE(v, 0.1);
        prev = v;
    }
    EXPECT_LE(cem_update(0.1, 40.0, 0.01), cem_update(0.2, 40.0, 0.01));
}

TEST(Cem, PlantAccumulatesFromStartOfStepTemperature) {
    SurrogatePlant p({}, PlantState{43.0, 60.0, 0.0, 3.0}, 0.5);
    p.step(Eigen::Vector2d(4.0, 2.0), 3.0);
    EXPECT_NEAR(p.state().cem, 0.5 / 60.0, 1e-15);
}

TEST(Lti, ZeroInputAndStateGiveZeroOutput) {
    LtiPlant p{MatrixXd::Identity(2, 2) * 0.5, MatrixXd::Ones(2, 1), MatrixXd::Ones(1, 2), MatrixXd::Zero(1, 1),
               Eigen::Vector2d::Zero()};
    for (int k = 0; k < 5; ++k) EXPECT_EQ(lti_step(p, VectorXd::Zero(1))(0), 0.0);
}

TEST(Lti, ImpulseResponseMatchesMatrixPowers) {
    LtiPlant p;
    p.A.resize(2, 2);
    p.A << 0.8, 1.0, -0.2, 0.5;
    p.B = Eigen::Vector2d(0.3, 1.0);
    p.C = Eigen::RowVector2d(1.0, -0.4);
    p.D = MatrixXd::Constant(1, 1, 0.1);
    p.x = Eigen::Vector2d::Zero();
    MatrixXd u = MatrixXd::Zero(1, 12);
    u(0, 0) = 1.0;
    const Trajectory t = simulate_lti(p, u);
    EXPECT_NEAR(t.y(0, 0), 0.1, 1e-15);
    MatrixXd a_pow = MatrixXd::Identity(2, 2);
    for (int k = 1; k < 12; ++k) {
        EXPECT_NEAR(t.y(0, k), (p.C * a_pow * p.B)(0, 0), 1e-12);
        a_pow = a_pow * p.A;
    }
}

TEST(Lti, DelayLineReturnsPreviousInput) {
    LtiPlant p{MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2),
               Eigen::Vector2d::Zero()};
    const Eigen::Vector2d a(1.0, 2.0), b(-3.0, 4.0);
    lti_step(p, a);
    EXPECT_EQ(lti_step(p, b), VectorXd(a));
    EXPECT_EQ(lti_step(p, a), VectorXd(b));
}

TEST(Collect, InputsInsideBoxAndDistancePiecewiseConstant) {
    ExcitationConfig e;
    e.u_hold_max = 10;
    const Trajectory t = collect_open_loop({}, e, 3000, 4);
    ASSERT_EQ(t.length(), 3000);
    EXPECT_GE(t.u.row(0).minCoeff(), 1.5);
    EXPECT_LE(t.u.row(0).maxCoeff(), 8.0);
    EXPECT_GE(t.u.row(1).minCoeff(), 1.0);
    EXPECT_LE(t.u.row(1).maxCoeff(), 6.0);
    EXPECT_GE(t.p.minCoeff(), 2.0);
    EXPECT_LE(t.p.maxCoeff(), 7.0);
    // Every distance segment except possibly the last lasts 20 to 100 samples.
    int run = 1;
    std::vector<int> runs;
    for (int k = 1; k < t.length(); ++k) {
        if (t.p(0, k) == t.p(0, k - 1)) {
            ++run;
        } else {
            runs.push_back(run);
            run = 1;
        }
    }
    ASSERT_GT(runs.size(), 10u);
    for (int r : runs) {
        EXPECT_GE(r, 20);
        EXPECT_LE(r, 100);
    }
    EXPECT_TRUE(t.y.allFinite());
}

TEST(Collect, DeterministicPerSeed) {
    const ExcitationConfig e;
    const std::string a = io::trajectory_to_csv(collect_open_loop({}, e, 500, 7));
    const std::string b = io::trajectory_to_csv(collect_open_loop({}, e, 500, 7));
    const std::string c = io::trajectory_to_csv(collect_open_loop({}, e, 500, 8));
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(Collect, OutputsFollowThePlant) {
    const ExcitationConfig e;
    const Trajectory t = collect_open_loop({}, e, 200, 3);
    PlantState s{t.y(0, 0), t.y(1, 0), 0.0, t.p(0, 0)};
    for (int k = 0; k + 1 < t.length(); ++k) {
        s = surrogate_step({}, s, t.u.col(k), t.p(0, k), t.dt);
        EXPECT_NEAR(s.Ts, t.y(0, k + 1), 1e-12);
        EXPECT_NEAR(s.Tg, t.y(1, k + 1), 1e-12);
    }
}

TEST(Collect, InvalidExcitationIsRejected) {
    ExcitationConfig e;
    e.d_hi = 9.0;
    EXPECT_THROW(collect_open_loop({}, e, 100, 1), ConfigError);
    ExcitationConfig h;
    h.u_hold_min = 3;
    h.u_hold_max = 2;
    EXPECT_THROW(collect_open_loop({}, h, 100, 1), ConfigError);
}

TEST(Noise, ZeroSigmaIsIdentity) {
    const Trajectory t = collect_open_loop({}, {}, 100, 1);
    const Trajectory n = add_measurement_noise(t, 0.0, 5);
    EXPECT_EQ(n.y, t.y);
}

TEST(Noise, SampleDeviationMatchesSigma) {
    const Trajectory t = collect_open_loop({}, {}, 10000, 1);
    const Trajectory n = add_measurement_noise(t, 0.2, 5);
    EXPECT_EQ(n.u, t.u);
    EXPECT_EQ(n.p, t.p);
    for (int ch = 0; ch < 2; ++ch) {
        const VectorXd e = (n.y.row(ch) - t.y.row(ch)).transpose();
        const double mean = e.mean();
        const double sd = std::sqrt((e.array() - mean).square().sum() / static_cast<double>(e.size() - 1));
        EXPECT_NEAR(sd, 0.2, 0.02);
        EXPECT_NEAR(mean, 0.0, 0.02);
    }
    EXPECT_NE(add_measurement_noise(t, 0.2, 6).y, n.y);
}

}  // namespace
}  // namespace npvdeepc::plant
