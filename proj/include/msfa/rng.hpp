#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace msfa {

// Deterministic samplers on top of std::mt19937_64. The std distribution
// classes are implementation-defined, so we map engine output ourselves to
// keep seeded results identical across standard libraries.

// Uniform draw in [0, 1) with 53-bit resolution.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller. Consumes two engine draws per pair.
class GaussianSampler {
public:
    explicit GaussianSampler(std::mt19937_64& rng) : rng_(rng) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(rng_);
        double u2 = uniform01(rng_);
        // Guard log(0); the offset is below the resolution of uniform01.
        double r = std::sqrt(-2.0 * std::log(u1 + 0x1.0p-54));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64& rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace msfa
