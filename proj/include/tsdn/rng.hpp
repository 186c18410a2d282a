#pragma once

#include <cmath>
#include <cstdint>

namespace tsdn {

// Deterministic splitmix64 generator. Unlike the standard library distributions
// its entire output stream is pinned down by this file, so seeds reproduce
// bit-identical data on every platform and toolchain.
class Rng {
  public:
    Rng() : state_(0x9e3779b97f4a7c15ULL) {}
    explicit Rng(std::uint64_t seed) : state_(mix(seed, 0x633b9b3d47a7e7c5ULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

    // Uniform integer in [0, n); n must be > 0.
    std::uint64_t next_index(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. Two uniforms per draw, no cached state,
    // so the stream stays a pure function of the seed and draw count.
    double next_gaussian() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        // Guard against log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Child generator for an independent stream (one per patch, epoch, ...).
    Rng split(std::uint64_t stream) const {
        Rng child;
        child.state_ = mix(state_, mix(stream, 0xd6e8feb86659fd93ULL));
        return child;
    }

    std::uint64_t state() const { return state_; }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t state_;
};

}  // namespace tsdn
