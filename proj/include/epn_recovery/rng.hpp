#pragma once

#include <cstdint>
#include <random>

namespace epn {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from (seed, key).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept {
    return mix64(mix64(seed) ^ (key * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
}

// Uniform in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Counter-based uniform: depends only on (seed, key), not on any call order.
constexpr double uniform01(std::uint64_t seed, std::uint64_t key) noexcept {
    return static_cast<double>(derive_seed(seed, key) >> 11) * 0x1.0p-53;
}

}  // namespace epn
