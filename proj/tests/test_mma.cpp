#include "support/oracles.hpp"

#include <auxlsm/mma.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace auxlsm;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double a : v) x(k++) = a;
    return x;
}

}  // namespace

TEST(Mma, UnconstrainedQuadraticInsideBox) {
    Mma mma;
    Eigen::VectorXd x = vec({0.05});
    for (int k = 0; k < 50; ++k) {
        const Eigen::VectorXd df = 2.0 * (x.array() - 0.5).matrix();
        x = mma.update(x, df, -1.0, Eigen::VectorXd::Zero(1), 0.0, 1.0).x;
    }
    EXPECT_NEAR(x(0), 0.5, 1e-3);
}

TEST(Mma, ActiveLinearConstraint) {
    Mma mma;
    Eigen::VectorXd x = vec({1.0});
    for (int k = 0; k < 100; ++k) x = mma.update(x, vec({1.0}), -x(0) + 0.3, vec({-1.0}), 0.0, 1.0).x;
    EXPECT_NEAR(x(0), 0.3, 1e-3);
}

TEST(Mma, MatchesProjectedGradientOracle) {
    const Eigen::VectorXd t = vec({0.9, 0.1, 0.5, 0.3, 0.7});
    const auto grad = [&](const Eigen::VectorXd& x) { return (2.0 * (x - t)).eval(); };
    const Eigen::VectorXd ref = oracle::projected_gradient(grad, Eigen::VectorXd::Constant(5, 0.2), 0.0, 1.0, 1.0, 0.1, 5000);

    Mma mma;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.2);
    for (int k = 0; k < 300; ++k) x = mma.update(x, grad(x), x.sum() - 1.0, Eigen::VectorXd::Ones(5), 0.0, 1.0).x;
    EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Mma, RespectsBoundsAndMoveLimits) {
    MmaSettings s;
    s.move = 0.1;
    Mma mma(s);
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(20, 0.0);
    for (int k = 0; k < 40; ++k) {
        Eigen::VectorXd df(20), dg(20);
        for (auto& v : df) v = 10 * U(rng);
        for (auto& v : dg) v = U(rng);
        const Eigen::VectorXd y = mma.update(x, df, U(rng), dg, -2.0, 2.0).x;
        EXPECT_LE((y - x).cwiseAbs().maxCoeff(), 0.1 * 4.0 + 1e-15);
        EXPECT_GE(y.minCoeff(), -2.0);
        EXPECT_LE(y.maxCoeff(), 2.0);
        EXPECT_TRUE(((y.array() > mma.state().low.array()) && (y.array() < mma.state().upp.array())).all());
        x = y;
    }
}

TEST(Mma, StationaryPointIsFixed) {
    Mma mma;
    const Eigen::VectorXd x = vec({0.2, 0.4, 0.9});
    const auto step = mma.update(x, Eigen::VectorXd::Zero(3), -0.5, Eigen::VectorXd::Ones(3), 0.0, 1.0);
    EXPECT_EQ(step.lambda, 0.0);
    EXPECT_LT((step.x - x).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Mma, AsymptotesShrinkOnOscillationAndExpandOnProgress) {
    // drive the same variable with alternating and with steady gradients
    Mma osc, mono;
    Eigen::VectorXd xo = vec({0.5}), xm = vec({0.5});
    const auto width = [](const Mma& m) { return m.state().upp(0) - m.state().low(0); };
    double wo = 0, wm = 0;
    for (int k = 0; k < 6; ++k) {
        xo = osc.update(xo, vec({k % 2 ? 1.0 : -1.0}), -1.0, vec({0.0}), 0.0, 1.0).x;
        xm = mono.update(xm, vec({-1.0}), -1.0, vec({0.0}), 0.0, 1.0).x;
        if (k >= 3) {
            EXPECT_LT(width(osc), wo);
            EXPECT_GT(width(mono), wm);
        }
        wo = width(osc);
        wm = width(mono);
    }
}

TEST(Mma, InfeasibleLinearizationMovesTowardFeasibility) {
    Mma mma;
    Eigen::VectorXd x = vec({0.9, 0.9});
    // sum x <= 0.1 cannot be reached within one move-limited step
    const auto step = mma.update(x, vec({-1.0, -1.0}), x.sum() - 0.1, vec({1.0, 1.0}), 0.0, 1.0);
    EXPECT_FALSE(step.constraint_feasible);
    EXPECT_LT(step.x.sum(), x.sum());
}

TEST(Mma, FatalDiagnostics) {
    Mma mma;
    const Eigen::VectorXd x = vec({0.5});
    EXPECT_THROW(mma.update(x, vec({std::nan("")}), 0.0, vec({1.0}), 0.0, 1.0), MmaError);
    EXPECT_THROW(mma.update(x, vec({1.0}), std::numeric_limits<double>::infinity(), vec({1.0}), 0.0, 1.0), MmaError);
    EXPECT_THROW(mma.update(x, vec({1.0}), 0.0, vec({1.0}), 1.0, 0.0), MmaError);
    EXPECT_THROW(mma.update(vec({2.0}), vec({1.0}), 0.0, vec({1.0}), 0.0, 1.0), MmaError);
    MmaSettings bad;
    bad.move = 0.0;
    EXPECT_THROW(Mma{bad}, std::invalid_argument);
}
