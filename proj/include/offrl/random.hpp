#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace offrl {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Unbiased integer in [0, n) by rejection.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

/// Draws an index from an unnormalized nonnegative weight vector.
inline std::size_t sample_categorical(Rng& rng, std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (u < probs[i]) return i;
        u -= probs[i];
    }
    // rounding: return the last index with positive mass
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

/// Box-Muller normal draw built on uniform01, so streams are reproducible
/// independently of the standard library's distribution implementation.
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Derives an independent seed for a sub-task (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace offrl
