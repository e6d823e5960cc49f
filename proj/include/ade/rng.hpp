#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ade {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic RNG used wherever randomness is part of a contract.
/// std::mt19937_64 is fully specified by the standard; the draws below are
/// hand-rolled because the <random> distributions are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

    /// Independent stream for item `index` of a run seeded with `seed`.
    static Rng derived(uint64_t seed, uint64_t index) {
        return Rng(splitmix64(seed) + index + 1);
    }

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    double next_unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, n), unbiased via rejection.
    uint64_t next_below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t r;
        do {
            r = eng_();
        } while (r >= limit);
        return r % n;
    }

    /// Uniform integer in [lo, hi], both inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    bool bernoulli(double p) { return next_unit() < p; }

    /// Knuth's product method; fine for the means used here.
    int poisson(double mean) {
        const double limit = std::exp(-mean);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= next_unit();
        } while (p > limit);
        return k - 1;
    }

    /// Geometric on {0, 1, ...} with the given mean, via inversion.
    int geometric(double mean) {
        const double p = 1.0 / (mean + 1.0);
        const double u = next_unit();
        return static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-p)));
    }

    /// Fisher-Yates; deterministic across platforms, unlike std::shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace ade
