#include <gtest/gtest.h>

#include <numbers>

#include "drgrade/objectives.hpp"
#include "drgrade/optim.hpp"

using namespace drgrade;

TEST(Schedule, ClosedForms)
{
    ScheduleSpec cos{ScheduleKind::cosine, 0.02};
    cos.total_epochs = 25;
    EXPECT_EQ(lr_at(cos, 0), 0.02);
    EXPECT_NEAR(lr_at(cos, 25), 0.0, 1e-18);
    cos.total_epochs = 24;
    EXPECT_NEAR(lr_at(cos, 12), 0.01, 1e-15);

    ScheduleSpec ex{ScheduleKind::exponential, 0.001};
    ex.gamma = 0.9;
    EXPECT_NEAR(lr_at(ex, 1), 0.0009, 1e-15);
    EXPECT_NEAR(lr_at(ex, 10), 0.001 * std::pow(0.9, 10), 1e-15);

    ScheduleSpec ms{ScheduleKind::multistep, 0.001};
    EXPECT_EQ(lr_at(ms, 14), 0.001);
    EXPECT_NEAR(lr_at(ms, 15), 1e-4, 1e-15);
    EXPECT_NEAR(lr_at(ms, 19), 1e-4, 1e-15);
    EXPECT_NEAR(lr_at(ms, 20), 1e-5, 1e-15);

    EXPECT_EQ(lr_at(ScheduleSpec{ScheduleKind::constant, 0.3}, 100), 0.3);
}

TEST(Schedule, NonIncreasingAndPure)
{
    for (auto kind : {ScheduleKind::constant, ScheduleKind::multistep, ScheduleKind::exponential, ScheduleKind::cosine}) {
        ScheduleSpec s{kind, 0.01};
        double prev = lr_at(s, 0);
        for (int t = 1; t <= s.total_epochs; ++t) {
            const double lr = lr_at(s, t);
            EXPECT_LE(lr, prev) << to_string(kind) << " t=" << t;
            EXPECT_EQ(lr, lr_at(s, t));
            prev = lr;
        }
    }
}

TEST(Schedule, InvalidSpecsAreRejected)
{
    ScheduleSpec cos{ScheduleKind::cosine, 0.01};
    cos.total_epochs = 10;
    EXPECT_THROW(lr_at(cos, 11), Error);
    EXPECT_THROW(lr_at(cos, -1), Error);
    ScheduleSpec ms{ScheduleKind::multistep, 0.01};
    ms.milestones = {20, 15};
    EXPECT_THROW(lr_at(ms, 0), Error);
    ScheduleSpec ex{ScheduleKind::exponential, 0.01};
    ex.gamma = 1.5;
    EXPECT_THROW(lr_at(ex, 0), Error);
    EXPECT_THROW(lr_at(ScheduleSpec{ScheduleKind::constant, 0.0}, 0), Error);
}

namespace {

ModelParams scalar_param(double v)
{
    ModelParams p;
    p.add("theta", Tensor({1}, v));
    return p;
}

} // namespace

TEST(Sgd, ZeroGradientZeroVelocityLeavesParamsUnchanged)
{
    ModelParams p = scalar_param(1.5);
    OptimizerState st{0.9, 0.0, {}};
    sgd_step(p, st, 0.1);
    EXPECT_EQ(p.at("theta").value[0], 1.5);
}

TEST(Sgd, PlainSgdWithoutMomentum)
{
    ModelParams p = scalar_param(2.0);
    p.at("theta").grad[0] = 0.5;
    OptimizerState st{0.0, 0.0, {}};
    sgd_step(p, st, 0.1);
    EXPECT_EQ(p.at("theta").value[0], 2.0 - 0.1 * 0.5);
    EXPECT_EQ(p.at("theta").grad[0], 0.0);
}

TEST(Sgd, TwoNesterovStepsOnQuadraticMatchScalarOracle)
{
    // loss 0.5 theta^2, gradient theta
    const double lr = 0.1, mu = 0.9, wd = 0.01;
    ModelParams p = scalar_param(1.0);
    OptimizerState st{mu, wd, {}};
    double theta = 1.0, v = 0.0;
    for (int step = 0; step < 2; ++step) {
        p.at("theta").grad[0] = p.at("theta").value[0];
        sgd_step(p, st, lr);
        const double g = theta + wd * theta;
        v = mu * v + g;
        theta -= lr * (g + mu * v);
        EXPECT_NEAR(p.at("theta").value[0], theta, 1e-12);
    }
}

TEST(Sgd, NonFiniteGradientIsAnError)
{
    ModelParams p = scalar_param(1.0);
    p.at("theta").grad[0] = std::numeric_limits<double>::quiet_NaN();
    OptimizerState st;
    try {
        sgd_step(p, st, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
    OptimizerState bad{1.0, 0.0, {}};
    EXPECT_THROW(sgd_step(p, bad, 0.1), Error);
}

TEST(Sgd, LinearModelConvergesToSlopeTwo)
{
    // y = 2x with MSE on a one-parameter model
    ModelParams p = scalar_param(0.0);
    OptimizerState st{0.9, 0.0, {}};
    const std::vector<double> xs{-1.0, -0.5, 0.25, 0.5, 1.0};
    for (int step = 0; step < 500; ++step) {
        double g = 0.0;
        for (double x : xs) g += 2.0 * (p.at("theta").value[0] * x - 2.0 * x) * x / xs.size();
        p.at("theta").grad[0] = g;
        sgd_step(p, st, 0.05);
    }
    EXPECT_NEAR(p.at("theta").value[0], 2.0, 0.01);
}
