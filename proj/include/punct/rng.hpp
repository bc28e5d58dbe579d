#pragma once

#include <cmath>
#include <cstdint>

namespace punct {

// Counter-based 64-bit generator: the SplitMix64 output function applied to
// seed + i * golden_gamma. Draw i depends only on (seed, i), so streams are
// reproducible across runs and platforms. Integer draws use integer
// arithmetic only.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Unbiased draw in [0, n) via bitmask rejection. n must be > 0.
    uint64_t next_below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t mask = ~uint64_t{0} >> countl_zero_(n - 1);
        uint64_t v;
        do {
            v = next_u64() & mask;
        } while (v >= n);
        return v;
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; caches the second deviate.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        // Keep u1 away from 0 so log() stays finite.
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Derives an independent stream seed from (seed, index).
    static uint64_t derive(uint64_t seed, uint64_t index) {
        SplitMix64 g(seed ^ (0xD1B54A32D192ED03ull * (index + 1)));
        return g.next_u64();
    }

private:
    static int countl_zero_(uint64_t x) {
        int n = 0;
        if (x == 0) return 64;
        while (!(x & 0x8000000000000000ull)) {
            x <<= 1;
            ++n;
        }
        return n;
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace punct
