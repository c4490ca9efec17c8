#pragma once

#include <cmath>
#include <cstdint>

namespace entk {

// SplitMix64: the portable seed stream behind parameter initialization and
// synthetic data. Fixed here so fingerprints and golden tests are stable.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in (0, 1]
    double next_open_unit() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    // uniform in [0, 1)
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// Standard Gaussians via Box-Muller over a SplitMix64 stream. Two uniforms
// are consumed per pair; the second variate is cached.
struct GaussianStream {
    SplitMix64 rng;
    bool have_spare = false;
    double spare = 0.0;

    explicit GaussianStream(std::uint64_t seed) : rng(seed) {}

    double next() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        const double u1 = rng.next_open_unit();
        const double u2 = rng.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(theta);
        have_spare = true;
        return r * std::cos(theta);
    }
};

}  // namespace entk
