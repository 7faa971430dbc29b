#include "support/oracles.hpp"

#include <auxlsm/splines.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace auxlsm;

TEST(Bernstein, QuadraticEndpointsAndMidpoint) {
    auto b = bernstein_eval(2, -1.0);
    EXPECT_DOUBLE_EQ(b.values(0), 1.0);
    EXPECT_DOUBLE_EQ(b.values(1), 0.0);
    EXPECT_DOUBLE_EQ(b.values(2), 0.0);

    b = bernstein_eval(2, 0.0);
    EXPECT_DOUBLE_EQ(b.values(0), 0.25);
    EXPECT_DOUBLE_EQ(b.values(1), 0.5);
    EXPECT_DOUBLE_EQ(b.values(2), 0.25);

    b = bernstein_eval(2, 1.0);
    EXPECT_DOUBLE_EQ(b.values(0), 0.0);
    EXPECT_DOUBLE_EQ(b.values(1), 0.0);
    EXPECT_DOUBLE_EQ(b.values(2), 1.0);
}

TEST(Bernstein, PartitionOfUnityAndDerivativeAgainstFiniteDifference) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-0.999, 0.999);
    for (int p = 1; p <= 5; ++p)
        for (int k = 0; k < 50; ++k) {
            const double xi = U(rng);
            const auto b = bernstein_eval(p, xi);
            EXPECT_NEAR(b.values.sum(), 1.0, 1e-14);
            EXPECT_NEAR(b.derivs.sum(), 0.0, 1e-13);
            EXPECT_GE(b.values.minCoeff(), 0.0);
            const double h = 1e-6;
            const Eigen::VectorXd fd = (bernstein_eval(p, xi + h).values - bernstein_eval(p, xi - h).values) / (2 * h);
            EXPECT_LT((fd - b.derivs).cwiseAbs().maxCoeff(), 1e-8);
        }
}

TEST(Bernstein, RejectsOutOfRange) {
    EXPECT_THROW(bernstein_eval(2, 1.5), std::domain_error);
    EXPECT_THROW(bernstein_eval(2, -1.01), std::domain_error);
}

TEST(KnotVector, Validation) {
    EXPECT_NO_THROW(KnotVector(2, {0, 0, 0, 0.5, 1, 1, 1}));
    EXPECT_THROW(KnotVector(2, {0, 0, 0.5, 1, 1, 1}), std::invalid_argument);        // start not repeated
    EXPECT_THROW(KnotVector(1, {0, 0, 0.5, 0.5, 0.5, 1, 1}), std::invalid_argument);  // multiplicity > p
    EXPECT_THROW(KnotVector(2, {0, 0, 0, 0.7, 0.5, 1, 1, 1}), std::invalid_argument); // decreasing
}

TEST(Extraction, SingleElementIsIdentity) {
    const auto ext = build_extraction(KnotVector(2, {0, 0, 0, 1, 1, 1}));
    ASSERT_EQ(ext.num_elements(), 1);
    EXPECT_TRUE(ext.operators[0].isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(Extraction, LinearOperatorsAreIdentity) {
    const auto ext = build_extraction(KnotVector(1, {0, 0, 0.5, 1, 1}));
    ASSERT_EQ(ext.num_elements(), 2);
    for (const auto& C : ext.operators) EXPECT_TRUE(C.isApprox(Eigen::MatrixXd::Identity(2, 2)));
}

namespace {

double max_extraction_error(const KnotVector& kv, int samples) {
    const auto ext = build_extraction(kv);
    double err = 0.0;
    for (int e = 0; e < ext.num_elements(); ++e) {
        const auto [a, b] = ext.spans[static_cast<std::size_t>(e)];
        for (int s = 0; s < samples; ++s) {
            const double xi = -1.0 + 2.0 * (s + 0.5) / samples;
            const double u = a + 0.5 * (xi + 1.0) * (b - a);
            const auto loc = local_basis(ext, e, xi);
            for (int l = 0; l <= kv.degree; ++l) {
                const int i = ext.first_basis[static_cast<std::size_t>(e)] + l;
                err = std::max(err, std::abs(loc.values(l) - oracle::cox_de_boor(kv.knots, i, kv.degree, u)));
                const double du = oracle::cox_de_boor_deriv(kv.knots, i, kv.degree, u) * 0.5 * (b - a);
                err = std::max(err, std::abs(loc.derivs(l) - du));
            }
            // functions not listed for this element vanish there
            for (int i = 0; i < kv.num_basis(); ++i) {
                const int l = i - ext.first_basis[static_cast<std::size_t>(e)];
                if (l >= 0 && l <= kv.degree) continue;
                err = std::max(err, std::abs(oracle::cox_de_boor(kv.knots, i, kv.degree, u)));
            }
        }
    }
    return err;
}

}  // namespace

TEST(Extraction, TwoElementQuadraticMatchesCoxDeBoor) {
    const KnotVector kv(2, {0, 0, 0, 0.5, 1, 1, 1});
    const auto ext = build_extraction(kv);
    ASSERT_EQ(ext.num_elements(), 2);
    Eigen::MatrixXd C1(3, 3), C2(3, 3);
    C1 << 1, 0, 0, 0, 1, 0.5, 0, 0, 0.5;
    C2 << 0.5, 0, 0, 0.5, 1, 0, 0, 0, 1;
    EXPECT_LT((ext.operators[0] - C1).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((ext.operators[1] - C2).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(max_extraction_error(kv, 20), 1e-13);
}

TEST(Extraction, UnitColumnSums) {
    const auto ext = build_extraction(KnotVector::open_uniform(3, 6));
    for (const auto& C : ext.operators) EXPECT_LT((C.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(Extraction, RandomOpenKnotVectorsMatchRecursion) {
    std::mt19937 rng(1234);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> count(0, 10);
    for (int trial = 0; trial < 60; ++trial) {
        const int p = 1 + trial % 3;
        std::vector<double> interior;
        const int nint = count(rng);
        for (int k = 0; k < nint; ++k) interior.push_back(std::round(U(rng) * 20.0) / 20.0);
        std::sort(interior.begin(), interior.end());
        // drop knots at the ends and cap multiplicities at p
        std::vector<double> kept;
        for (double v : interior) {
            if (v <= 0.0 || v >= 1.0) continue;
            if (static_cast<int>(std::count(kept.begin(), kept.end(), v)) >= p) continue;
            kept.push_back(v);
        }
        std::vector<double> knots(static_cast<std::size_t>(p + 1), 0.0);
        knots.insert(knots.end(), kept.begin(), kept.end());
        knots.insert(knots.end(), static_cast<std::size_t>(p + 1), 1.0);
        const KnotVector kv(p, knots);
        EXPECT_LT(max_extraction_error(kv, 7), 1e-12) << "trial " << trial << " p=" << p;
    }
}

TEST(Greville, ClosedFormAverages) {
    EXPECT_EQ(greville_points(KnotVector(2, {0, 0, 0, 1, 1, 1})), (std::vector<double>{0, 0.5, 1}));
    EXPECT_EQ(greville_points(KnotVector(2, {0, 0, 0, 0.5, 1, 1, 1})), (std::vector<double>{0, 0.25, 0.75, 1}));
    EXPECT_EQ(greville_points(KnotVector(1, {0, 0, 1, 1})), (std::vector<double>{0, 1}));
}

TEST(Nurbs, UnitWeightsReduceToBsplines) {
    auto ext = build_extraction<2>({KnotVector::open_uniform(2, 3), KnotVector::open_uniform(2, 3)});
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int e = 0; e < ext.num_elements(); ++e) {
        const std::array<double, 2> xi{U(rng), U(rng)};
        const auto R = nurbs_eval<2>(ext, e, xi);
        const auto ei = ext.element_multi_index(e);
        const auto bx = local_basis(ext.dirs[0], ei[0], xi[0]);
        const auto by = local_basis(ext.dirs[1], ei[1], xi[1]);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) {
                // tensor-product consistency
                EXPECT_NEAR(R.values(j * 3 + i), bx.values(i) * by.values(j), 1e-15);
                EXPECT_NEAR(R.grads(j * 3 + i, 0), bx.derivs(i) * by.values(j), 1e-14);
            }
    }
}

TEST(Nurbs, PartitionOfUnityAtElementCentre) {
    auto ext = build_extraction<1>({KnotVector(2, {0, 0, 0, 0.5, 1, 1, 1})});
    for (int e = 0; e < 2; ++e) EXPECT_NEAR(nurbs_eval<1>(ext, e, {0.0}).values.sum(), 1.0, 1e-13);
}

TEST(Nurbs, RandomWeightsPartitionOfUnity) {
    auto ext = build_extraction<2>({KnotVector::open_uniform(2, 4), KnotVector(3, {0, 0, 0, 0, 0.3, 0.6, 1, 1, 1, 1})});
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> W(0.2, 3.0), X(-1.0, 1.0);
    for (auto& w : ext.weights) w = W(rng);
    std::uniform_int_distribution<int> E(0, ext.num_elements() - 1);
    for (int k = 0; k < 100; ++k) {
        const auto R = nurbs_eval<2>(ext, E(rng), {X(rng), X(rng)});
        EXPECT_NEAR(R.values.sum(), 1.0, 1e-12);
        EXPECT_NEAR(R.grads.col(0).sum(), 0.0, 1e-10);
        EXPECT_NEAR(R.grads.col(1).sum(), 0.0, 1e-10);
        EXPECT_GE(R.values.minCoeff(), 0.0);
    }
}

TEST(Nurbs, RationalGradientMatchesFiniteDifference) {
    auto ext = build_extraction<2>({KnotVector::open_uniform(2, 3), KnotVector::open_uniform(2, 3)});
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> W(0.5, 2.0);
    for (auto& w : ext.weights) w = W(rng);
    const std::array<double, 2> xi{0.3, -0.4};
    const auto R = nurbs_eval<2>(ext, 4, xi);
    const double h = 1e-6;
    for (int g = 0; g < 2; ++g) {
        auto a = xi, b = xi;
        a[g] += h;
        b[g] -= h;
        const Eigen::VectorXd fd = (nurbs_eval<2>(ext, 4, a).values - nurbs_eval<2>(ext, 4, b).values) / (2 * h);
        EXPECT_LT((fd - R.grads.col(g)).cwiseAbs().maxCoeff(), 1e-8);
    }
}
