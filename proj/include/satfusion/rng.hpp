#pragma once

#include <cmath>
#include <cstdint>

namespace satfusion {

/// Deterministic random stream built on SplitMix64.
///
/// The standard <random> distributions are not bit-stable across library
/// implementations, so everything that must reproduce byte-identical
/// artifacts (scene synthesis, weight init, epoch shuffles) draws from this
/// generator instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 bits of entropy.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi]; degenerate ranges return lo exactly.
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    /// Uniform integer in [lo, hi], both ends inclusive.
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + int(next_u64() % span);
    }

    /// Standard normal via Box-Muller; caches the spare draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Derives an independent child seed from (seed, index). Used for per-frame,
/// per-scene, and per-epoch streams so that parallel and sequential
/// generation agree byte for byte.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    Rng mix(seed ^ (0xA0761D6478BD642Full * (index + 1)));
    return mix.next_u64();
}

} // namespace satfusion
