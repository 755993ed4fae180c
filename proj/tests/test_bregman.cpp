#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dncc/bregman.hpp"
#include "dncc/error.hpp"

using namespace dncc;

// Reference values from tests/oracles/worked_values.py (50-digit mpmath).
constexpr double kD_half_quarter = 0.30685281944005469;
constexpr double kInfo_half_quarter = 0.058891517828191727;

TEST(BregmanDivergence, ZeroAtEqualPoints) {
    EXPECT_EQ(bregman_divergence(neg_log(), 0.3, 0.3), 0.0);
}

TEST(BregmanDivergence, SquaredNormIsSquaredDistance) {
    const Point a{1, 2}, b{0, 0};
    EXPECT_DOUBLE_EQ(bregman_divergence(squared_norm(), a, b), 5.0);
}

TEST(BregmanDivergence, NegLogWorkedValue) {
    EXPECT_NEAR(bregman_divergence(neg_log(), 0.5, 0.25), kD_half_quarter, 1e-12);
}

TEST(BregmanDivergence, Asymmetric) {
    const double ab = bregman_divergence(neg_log(), 0.5, 0.25);
    const double ba = bregman_divergence(neg_log(), 0.25, 0.5);
    EXPECT_GT(std::abs(ab - ba), 1e-3);
}

TEST(BregmanDivergence, NonNegativeOnRandomPoints) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1e-3, 4.0);
    for (const auto& phi : {neg_log(), squared_norm(), x_log_x()}) {
        for (int t = 0; t < 200; ++t) {
            const Point a{u(rng), u(rng)}, b{u(rng), u(rng)};
            EXPECT_GE(bregman_divergence(phi, a, b), -1e-15) << phi.name;
        }
    }
}

TEST(BregmanDivergence, OutsideDomainRejected) {
    EXPECT_THROW(bregman_divergence(neg_log(), -0.1, 0.5), DomainError);
    EXPECT_THROW(bregman_divergence(neg_log(), 0.5, 0.0), DomainError);
    // x log x is defined at 0 but its gradient is not.
    EXPECT_NO_THROW(bregman_divergence(x_log_x(), 0.0, 0.5));
    EXPECT_THROW(bregman_divergence(x_log_x(), 0.5, 0.0), DomainError);
}

TEST(BregmanDivergence, DimensionMismatchRejected) {
    const Point a{1, 2}, b{1};
    EXPECT_THROW(bregman_divergence(squared_norm(), a, b), DimensionError);
}

TEST(BregmanInformation, SinglePointIsZero) {
    for (const auto& phi : {neg_log(), squared_norm(), x_log_x()}) {
        const auto d = DiscreteDistribution::uniform({{0.7, 1.3}});
        EXPECT_EQ(bregman_information(phi, d), 0.0) << phi.name;
        EXPECT_EQ(jensen_gap(phi, d), 0.0) << phi.name;
    }
}

TEST(BregmanInformation, SquaredNormIsVariance) {
    const auto d = DiscreteDistribution::uniform({{0.0}, {2.0}});
    EXPECT_DOUBLE_EQ(bregman_information(squared_norm(), d), 1.0);
    EXPECT_DOUBLE_EQ(jensen_gap(squared_norm(), d), 1.0);
}

TEST(BregmanInformation, NegLogWorkedValue) {
    const auto d = DiscreteDistribution::uniform({{0.5}, {0.25}});
    EXPECT_NEAR(bregman_information(neg_log(), d), kInfo_half_quarter, 1e-12);
    EXPECT_NEAR(jensen_gap(neg_log(), d), kInfo_half_quarter, 1e-12);
}

TEST(BregmanInformation, EqualsJensenGapOnWeightedDistribution) {
    DiscreteDistribution d;
    d.points = {{0.1, 2.0}, {0.7, 0.3}, {1.9, 1.1}};
    d.weights = {0.2, 0.5, 0.3};
    for (const auto& phi : {neg_log(), squared_norm(), x_log_x()}) {
        EXPECT_NEAR(bregman_information(phi, d), jensen_gap(phi, d), 1e-12) << phi.name;
    }
}

TEST(BregmanInformation, ZeroProbabilityRejected) {
    const auto d = DiscreteDistribution::uniform({{0.0}, {0.0}});
    EXPECT_THROW(bregman_information(neg_log(), d), DomainError);
}

TEST(DiscreteDistribution, WeightsMustSumToOne) {
    DiscreteDistribution d;
    d.points = {{1.0}, {2.0}};
    d.weights = {0.5, 0.6};
    EXPECT_THROW(d.validate(), ContractError);
}

TEST(ItakuraSaito, EqualArgumentsGiveZero) {
    EXPECT_EQ(itakura_saito_log_domain(-1.7, -1.7), 0.0);
}

TEST(ItakuraSaito, MatchesBregmanDivergence) {
    EXPECT_NEAR(itakura_saito_log_domain(std::log(0.5), std::log(0.25)), kD_half_quarter, 1e-12);
}

TEST(ItakuraSaito, TinyProbabilityStaysFinite) {
    const double v = itakura_saito_log_domain(-700.0, -1.0);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 698.0, 1e-9);
}
