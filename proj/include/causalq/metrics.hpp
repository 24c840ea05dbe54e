#pragma once

#include "causalq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace causalq {

/// (score - random) / (demonstrator - random).
inline double normalized_score(double score, double random_ref, double demo_ref) {
    const double denom = demo_ref - random_ref;
    if (denom == 0.0) throw std::invalid_argument("normalized_score: demonstrator and random references coincide");
    return (score - random_ref) / denom;
}

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty input");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

/// Interquartile mean with fractional trimming.
///
/// Sorted values are treated as unit-width cells on [0, n); each value is
/// weighted by the overlap of its cell with [n/4, 3n/4]. For n divisible by 4
/// this drops exactly n/4 values at each end. For n = 5 the kept window is
/// [1.25, 3.75], so the 2nd and 4th values get weight 0.75, the 3rd weight 1,
/// and the result is (0.75 v2 + v3 + 0.75 v4) / 2.5.
inline double iqm(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("iqm: empty input");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    const double lo = 0.25 * n, hi = 0.75 * n;
    double acc = 0.0, weight = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double w = std::max(0.0, std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i)));
        acc += w * s[i];
        weight += w;
    }
    return acc / weight;
}

/// Linear-interpolation quantile of sorted data, q in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

enum class Aggregate { mean, median, iqm };

inline std::string_view to_string(Aggregate a) {
    switch (a) {
        case Aggregate::mean: return "mean";
        case Aggregate::median: return "median";
        case Aggregate::iqm: return "iqm";
    }
    return "unknown";
}

inline Aggregate aggregate_from_string(std::string_view s) {
    if (s == "mean") return Aggregate::mean;
    if (s == "median") return Aggregate::median;
    if (s == "iqm") return Aggregate::iqm;
    throw std::invalid_argument("unknown aggregate: " + std::string(s));
}

/// Scores grouped by environment: strata[e] holds one score per seed.
using StratifiedScores = std::vector<std::vector<double>>;

/// Mean and IQM pool every score; the median is taken over per-environment
/// means.
inline double aggregate_scores(const StratifiedScores& strata, Aggregate agg) {
    if (strata.empty()) throw std::invalid_argument("aggregate_scores: no strata");
    if (agg == Aggregate::median) {
        std::vector<double> per_env;
        per_env.reserve(strata.size());
        for (const auto& s : strata) per_env.push_back(mean(s));
        return median(per_env);
    }
    std::vector<double> pooled;
    for (const auto& s : strata) {
        if (s.empty()) throw std::invalid_argument("aggregate_scores: empty stratum");
        pooled.insert(pooled.end(), s.begin(), s.end());
    }
    return agg == Aggregate::mean ? mean(pooled) : iqm(pooled);
}

struct Interval {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap interval for an aggregate. Each resample draws, with
/// replacement, as many scores as each environment has, from that
/// environment only.
inline Interval stratified_bootstrap_ci(const StratifiedScores& strata, Aggregate agg, std::size_t n_resamples,
                                        double confidence, std::uint64_t seed) {
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("stratified_bootstrap_ci: confidence must lie in (0, 1)");
    if (n_resamples < 1) throw std::invalid_argument("stratified_bootstrap_ci: need >= 1 resample");
    if (strata.empty()) throw std::invalid_argument("stratified_bootstrap_ci: no strata");
    for (const auto& s : strata)
        if (s.empty()) throw std::invalid_argument("stratified_bootstrap_ci: empty stratum");

    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(n_resamples);
    StratifiedScores resample(strata.size());
    for (std::size_t r = 0; r < n_resamples; ++r) {
        for (std::size_t e = 0; e < strata.size(); ++e) {
            const auto& src = strata[e];
            resample[e].resize(src.size());
            for (auto& v : resample[e]) v = src[rng.below(src.size())];
        }
        stats.push_back(aggregate_scores(resample, agg));
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - confidence;
    return {aggregate_scores(strata, agg), quantile_sorted(stats, alpha / 2.0), quantile_sorted(stats, 1.0 - alpha / 2.0)};
}

}  // namespace causalq
