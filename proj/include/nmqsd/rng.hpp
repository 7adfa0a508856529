#pragma once

#include <cmath>
#include <cstdint>

#include "nmqsd/core.hpp"

namespace nmqsd {

// Counter-based random stream: the n-th output is a pure function of
// (key, n), so per-path streams keyed by (global seed, path index) are
// reproducible and independent of execution order.
//
// SplitMix64 core: state walks in increments of the golden-ratio gamma,
// outputs are a strong 64-bit mix of the state.
class RngStream {
  public:
    RngStream() = default;
    RngStream(std::uint64_t global_seed, std::uint64_t stream_id) {
        // Mix seed and stream id so that nearby (seed, id) pairs land far apart.
        state_ = mix(mix(global_seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream_id + 0xbf58476d1ce4e5b9ULL));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform double in (0, 1]; never returns 0 so log() is safe.
    double next_u01() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Circular complex standard normal: w = (g1 + i*g2)/sqrt(2) with g1, g2
    // independent real standard normals, so M[|w|^2] = 1 and M[w^2] = 0
    // holds structurally. Generated in polar (Box-Muller) form.
    Complex next_complex_normal() {
        const double u1 = next_u01();
        const double u2 = next_u01();
        const double r = std::sqrt(-std::log(u1));
        const double phi = 2.0 * kPi * u2;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    // Real standard normal (used where a single real Gaussian is needed).
    double next_normal() {
        const double u1 = next_u01();
        const double u2 = next_u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_ = 0;
};

}  // namespace nmqsd
