// Deterministic RNG with named substream derivation.
//
// Every random draw in the project flows from a single seed fanned out via
// derive(); std::random distributions are avoided on purpose so that streams
// are identical across platforms and standard-library versions.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "aptx/core.hpp"

namespace aptx {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t x) {
    std::uint64_t s = x;
    return splitmix64(s);
}

// Substream key: hash of (seed, tag) so independent consumers never share a
// stream even when they share the top-level seed.
inline std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return mix64(seed ^ mix64(h));
}

inline std::uint64_t derive(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    return mix64(derive(seed, tag) ^ mix64(index + 0x51ed2701ull));
}

// xoshiro256** seeded via splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::int64_t uniform_int(std::int64_t n) {
        if (n <= 0) throw ArgumentError("uniform_int: n must be positive");
        return static_cast<std::int64_t>(
            (static_cast<unsigned __int128>(next()) * static_cast<unsigned __int128>(n)) >> 64);
    }

    // Box-Muller; two uniforms per draw, no caching, so call order alone
    // determines the stream.
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // k distinct values from [0, n) via partial Fisher-Yates.
    std::vector<std::int64_t> sample_distinct(std::int64_t n, std::int64_t k) {
        if (k > n) throw SamplingError(cat("sample_distinct: k=", k, " exceeds population n=", n));
        std::vector<std::int64_t> pool(n);
        for (std::int64_t i = 0; i < n; ++i) pool[i] = i;
        for (std::int64_t i = 0; i < k; ++i) {
            const std::int64_t j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace aptx
