#include "complora/random.hpp"

#include <cmath>

namespace complora {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t RandomSource::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RandomSource::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RandomSource::below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = -n % n;  // 2^64 mod n
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= limit) return x % n;
    }
}

double RandomSource::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    return u * f;
}

Matrix RandomSource::gaussian(std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = stddev * normal();
    return m;
}

RandomSource RandomSource::fork(std::uint64_t stream) const {
    std::uint64_t sm = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    return RandomSource(splitmix64(sm));
}

}  // namespace complora
