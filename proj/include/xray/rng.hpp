#pragma once

// Deterministic randomness helpers. std::uniform_*_distribution and
// std::shuffle are not seed-stable across standard library versions, so the
// few primitives we need are spelled out on top of std::mt19937.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace xray {

using Rng = std::mt19937;

// Uniform double in [0, 1) from 53 random bits.
inline double rand_uniform(Rng& rng) {
    uint64_t hi = rng();
    uint64_t lo = rng();
    uint64_t bits = ((hi << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rand_uniform(rng);
}

// Unbiased integer in [0, n) via rejection sampling.
inline uint32_t rand_below(Rng& rng, uint32_t n) {
    if (n <= 1) return 0;
    uint32_t limit = UINT32_MAX - UINT32_MAX % n;
    uint32_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Standard normal via Box-Muller (one value per call, deterministic stream).
inline double rand_normal(Rng& rng) {
    double u1 = rand_uniform(rng);
    double u2 = rand_uniform(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Fisher-Yates shuffle with a fixed draw order.
template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = rand_below(rng, static_cast<uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

// Stream derivation for per-item rngs: mixes (seed, index) into a fresh seed.
inline uint32_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t x = seed * 0x9E3779B97F4A7C15ULL + a * 0xBF58476D1CE4E5B9ULL + b * 0x94D049BB133111EBULL + 1;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return static_cast<uint32_t>(x ^ (x >> 32));
}

}  // namespace xray
