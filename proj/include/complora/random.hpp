#pragma once

#include <cstdint>
#include <optional>

#include "complora/matrix.hpp"

namespace complora {

/// Seeded pseudo-random source.
///
/// The integer stream is xoshiro256** (Blackman & Vigna) with its four state
/// words expanded from the seed by SplitMix64, so a seed reproduces the same
/// 64-bit sequence on every platform. Uniform doubles take the top 53 bits.
/// Gaussian draws use the Marsaglia polar method, which needs only sqrt and
/// log from the math library.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform integer on [0, n), unbiased (rejection sampling).
    std::uint64_t below(std::uint64_t n);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Matrix gaussian(std::size_t rows, std::size_t cols, double stddev);

    /// Independent child stream, e.g. one per (method, seed, c) run.
    RandomSource fork(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    std::optional<double> spare_;
};

/// SplitMix64 finalizer, used for seed expansion and stream derivation.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace complora
