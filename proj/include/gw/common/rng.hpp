#pragma once

// Portable random helpers on top of std::mt19937_64, whose output sequence is
// fixed by the standard. The std:: distributions are implementation-defined, so
// every conversion used for reproducible artifacts lives here instead.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace gw {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for item `index` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n). Consumes exactly one engine draw regardless of n,
// so streams stay aligned across pools of different sizes.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const unsigned __int128 prod = static_cast<unsigned __int128>(rng()) * n;
    return static_cast<std::size_t>(prod >> 64);
}

inline bool coin(Rng& rng) { return (rng() >> 63) != 0; }

// Box-Muller; consumes two draws per call.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

template <class Vec>
void shuffle(Vec& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace gw
