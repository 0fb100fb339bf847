#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "qwalk/types.hpp"

namespace qwalk {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seedable, machine-independent generator: mt19937_64 (bit-exact per the
/// standard) with explicit uniform and Box-Muller normal mappings.
/// Independent per-sample streams come from substream(), which hashes
/// (masterSeed, index) through splitmix64 so results do not depend on
/// evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    static Rng substream(std::uint64_t masterSeed, std::uint64_t index) {
        return Rng(splitmix64(masterSeed ^ splitmix64(index)));
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        cache_ = r * std::sin(2.0 * M_PI * u2);
        have_cache_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    cplx cnormal() {
        double re = normal();
        return {re, normal()};
    }

    std::uint64_t bits() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool have_cache_ = false;
    double cache_ = 0.0;
};

}  // namespace qwalk
