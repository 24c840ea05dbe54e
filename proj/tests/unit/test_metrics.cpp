#include "causalq/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace causalq;

TEST(NormalizedScore, PongArithmetic) {
    EXPECT_NEAR(normalized_score(21.0, -20.7, 20.8), 41.7 / 41.5, 1e-12);
    EXPECT_NEAR(normalized_score(21.0, -20.7, 20.8), 1.005, 1e-3);
}

TEST(NormalizedScore, EndpointsAndErrors) {
    EXPECT_EQ(normalized_score(-3.0, -3.0, 7.0), 0.0);
    EXPECT_EQ(normalized_score(7.0, -3.0, 7.0), 1.0);
    EXPECT_THROW(normalized_score(1.0, 2.0, 2.0), std::invalid_argument);
}

TEST(NormalizedScore, AffineEquivariance) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int t = 0; t < 100; ++t) {
        const double s = u(gen), r = u(gen), d = r + 1.0 + std::abs(u(gen));
        const double base = normalized_score(s, r, d);
        const double c = u(gen), k = 0.1 + std::abs(u(gen));
        EXPECT_NEAR(normalized_score(s + c, r + c, d + c), base, 1e-9);
        EXPECT_NEAR(normalized_score(k * s, k * r, k * d), base, 1e-9);
    }
}

TEST(Iqm, Examples) {
    const std::vector<double> c(7, 2.5);
    EXPECT_DOUBLE_EQ(iqm(c), 2.5);
    const std::vector<double> four{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(iqm(four), 2.5);
    const std::vector<double> eight{1, 2, 3, 4, 5, 6, 7, 8};
    EXPECT_DOUBLE_EQ(iqm(eight), 4.5);
    EXPECT_THROW(iqm(std::vector<double>{}), std::invalid_argument);
}

TEST(Iqm, FractionalTrimmingForFive) {
    const std::vector<double> v{10, 1, 7, 3, 100};  // sorted: 1 3 7 10 100
    EXPECT_DOUBLE_EQ(iqm(v), (0.75 * 3 + 7 + 0.75 * 10) / 2.5);
}

TEST(Iqm, OutlierInTrimmedQuartileIsIgnored) {
    const std::vector<double> base{1, 2, 3, 4, 5, 6, 7, 8};
    auto outlier = base;
    outlier.back() = 1e9;
    EXPECT_DOUBLE_EQ(iqm(outlier), iqm(base));
}

TEST(Aggregates, PermutationInvariant) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> v(23);
    for (auto& x : v) x = n(gen);
    const double m = mean(v), md = median(v), q = iqm(v);
    for (int t = 0; t < 20; ++t) {
        std::shuffle(v.begin(), v.end(), gen);
        EXPECT_NEAR(mean(v), m, 1e-12);
        EXPECT_EQ(median(v), md);
        EXPECT_NEAR(iqm(v), q, 1e-12);
    }
}

TEST(Aggregates, MedianOfEnvironmentMeans) {
    const StratifiedScores strata{{1, 3}, {10, 10}, {4, 6}};
    EXPECT_DOUBLE_EQ(aggregate_scores(strata, Aggregate::median), 5.0);
    EXPECT_DOUBLE_EQ(aggregate_scores(strata, Aggregate::mean), 34.0 / 6);
    EXPECT_EQ(aggregate_from_string("iqm"), Aggregate::iqm);
    EXPECT_THROW(aggregate_from_string("max"), std::invalid_argument);
}

TEST(Quantile, LinearInterpolation) {
    const std::vector<double> v{0, 10, 20};
    EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.25), 5.0);
    EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 20.0);
}

TEST(Bootstrap, IdenticalScoresGiveZeroWidth) {
    const StratifiedScores strata{{2, 2, 2}, {2, 2}};
    for (auto agg : {Aggregate::mean, Aggregate::median, Aggregate::iqm}) {
        const auto iv = stratified_bootstrap_ci(strata, agg, 200, 0.95, 1);
        EXPECT_EQ(iv.lo, 2.0);
        EXPECT_EQ(iv.hi, 2.0);
        EXPECT_EQ(iv.point, 2.0);
    }
}

TEST(Bootstrap, TwoValuesStayInRange) {
    const StratifiedScores strata{{1.0, 3.0}};
    const auto iv = stratified_bootstrap_ci(strata, Aggregate::mean, 500, 0.5, 2);
    EXPECT_GE(iv.lo, 1.0);
    EXPECT_LE(iv.hi, 3.0);
    EXPECT_LE(iv.lo, iv.hi);
}

TEST(Bootstrap, DeterministicPerSeed) {
    const StratifiedScores strata{{1, 5, 2, 8}, {3, 3, 9}};
    const auto a = stratified_bootstrap_ci(strata, Aggregate::iqm, 300, 0.9, 7);
    const auto b = stratified_bootstrap_ci(strata, Aggregate::iqm, 300, 0.9, 7);
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
}

TEST(Bootstrap, ResamplesWithinStrata) {
    // strata with disjoint supports: every resample keeps one value from each
    const StratifiedScores strata{{0.0}, {10.0, 20.0}};
    const auto iv = stratified_bootstrap_ci(strata, Aggregate::median, 200, 0.99, 3);
    EXPECT_GE(iv.lo, 5.0);
    EXPECT_LE(iv.hi, 10.0);
}

TEST(Bootstrap, RejectsBadInput) {
    EXPECT_THROW(stratified_bootstrap_ci({{1.0}}, Aggregate::mean, 10, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(stratified_bootstrap_ci({{1.0}}, Aggregate::mean, 10, 0.0, 0), std::invalid_argument);
    EXPECT_THROW(stratified_bootstrap_ci({}, Aggregate::mean, 10, 0.9, 0), std::invalid_argument);
    EXPECT_THROW(stratified_bootstrap_ci({{1.0}, {}}, Aggregate::mean, 10, 0.9, 0), std::invalid_argument);
}

TEST(Bootstrap, CoverageOfKnownMean) {
    std::mt19937_64 gen(11);
    const double mus[4] = {0.0, 1.0, -2.0, 0.5};
    const double pop_mean = (0.0 + 1.0 - 2.0 + 0.5) / 4;
    int covered = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        StratifiedScores strata(4);
        for (int e = 0; e < 4; ++e) {
            std::normal_distribution<double> n(mus[e], 1.0);
            for (int i = 0; i < 30; ++i) strata[e].push_back(n(gen));
        }
        const auto iv = stratified_bootstrap_ci(strata, Aggregate::mean, 1000, 0.95, t);
        covered += iv.lo <= pop_mean && pop_mean <= iv.hi;
    }
    EXPECT_GE(covered / double(trials), 0.90);
}
