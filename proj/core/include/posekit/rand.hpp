#pragma once

#include <cmath>
#include <numbers>
#include <random>

namespace posekit {

// Draws are built from raw mt19937_64 output so that seeded streams are
// bit-identical across standard library implementations.

inline double next_uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53; // [0, 1)
}

inline double next_uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + next_uniform01(rng) * (hi - lo);
}

inline bool next_bernoulli(std::mt19937_64& rng, double p) {
    return next_uniform01(rng) < p;
}

inline double next_gaussian(std::mt19937_64& rng) {
    const double u1 = 1.0 - next_uniform01(rng); // (0, 1]
    const double u2 = next_uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace posekit
