#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace causalq {

/// Seedable counter-based generator (SplitMix64).
///
/// The n-th output is a fixed bijective mix of `seed + n * 0x9E3779B97F4A7C15`,
/// so a stream is fully described by (seed, counter). Derived streams are
/// obtained with `split`, which keeps independent consumers (sampling, replay,
/// evaluation) from perturbing one another. Every distribution below is built
/// from raw 64-bit outputs so results do not depend on the standard library.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return mix(seed_ + (++counter_) * kGolden); }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), unbiased (rejection on the top of the range).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do {
            r = (*this)();
        } while (r >= limit);
        return r % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Index drawn from a probability vector by inverse CDF; the last index
    /// with positive mass absorbs round-off.
    std::size_t categorical(std::span<const double> probs) {
        const double r = uniform();
        double acc = 0.0;
        std::size_t last = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last = i;
            if (r < acc) return i;
        }
        return last;
    }

    /// Independent stream keyed by `stream`; does not advance this generator.
    Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + kGolden))); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace causalq
