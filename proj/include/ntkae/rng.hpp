#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace ntkae {

// Named substreams derived from one root seed. Every consumer that needs
// randomness asks for its own stream by (root, tag, index...) so results do
// not depend on evaluation order or thread count.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(root);
    for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    return Rng(substream_seed(root, path));
}

// Stream tags. Values are part of the reproducibility contract; do not renumber.
namespace stream {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t encoder = 2;
inline constexpr std::uint64_t decoder = 3;
inline constexpr std::uint64_t trial = 4;
inline constexpr std::uint64_t probe = 5;
inline constexpr std::uint64_t perturbation = 6;
inline constexpr std::uint64_t power_start = 7;
inline constexpr std::uint64_t renormal = 8;
}  // namespace stream

inline double standard_normal(Rng& rng) {
    // Box-Muller without caching, so each call consumes exactly two draws.
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = 0.0;
    do {
        u1 = std::generate_canonical<double, 53>(rng);
    } while (u1 <= 0.0);
    const double u2 = std::generate_canonical<double, 53>(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline double rademacher(Rng& rng) { return (rng() >> 63) ? 1.0 : -1.0; }

}  // namespace ntkae
