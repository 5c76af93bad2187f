#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace prn {

/*
 * Deterministic random source. std::mt19937_64 output is pinned by the
 * standard, but the standard distributions are not, so the mappings to
 * uniform/normal are done here by hand. Same seed -> same stream, on any
 * platform.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform double in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n). Modulo bias is negligible for the small n
    // used here and keeps the mapping trivially reproducible.
    std::uint64_t uniform_int(std::uint64_t n) { return eng_() % n; }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace prn
