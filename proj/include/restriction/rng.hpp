#pragma once

#include <cstdint>
#include <cmath>

namespace restriction {

// Counter-based seed splitter (splitmix64 finalizer).  Per-sample streams are
// derived as split(master, index), so results do not depend on how samples
// are distributed across workers.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 0x51ed2701u));
}

// xoshiro256++, seeded via splitmix64.  Self-contained so that streams are
// bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) {
            x = splitmix64(x);
            w = x;
        }
        have_cached_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in (0,1)
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // standard normal via Box-Muller (explicit, implementation-independent)
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double cauchy(double scale) {
        return scale * std::tan(3.14159265358979323846 * (uniform() - 0.5));
    }

    // Poisson via inversion for small means, rejection otherwise
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            double p = std::exp(-mean), f = p, u = uniform();
            std::uint64_t k = 0;
            while (u > f && k < 10000) {
                ++k;
                p *= mean / static_cast<double>(k);
                f += p;
            }
            return k;
        }
        // normal approximation tail-corrected by rounding; adequate for the
        // large-mean bookkeeping uses in this codebase
        double x = mean + std::sqrt(mean) * normal();
        return x < 0 ? 0 : static_cast<std::uint64_t>(x + 0.5);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
    double cached_ = 0.0;
    bool have_cached_;
};

}  // namespace restriction
