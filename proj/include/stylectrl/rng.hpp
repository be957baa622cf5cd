#pragma once

// Deterministic RNG used wherever a seed appears. The float helpers are
// written out here instead of using <random> distributions so that results
// depend only on the mt19937_64 stream, not on the standard library build.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace stylectrl {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n) by rejection, unbiased.
    int uniform_int(int n) {
        if (n <= 1) return 0;
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return static_cast<int>(x % un);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double gauss(double mu = 0.0, double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + spare_ * sigma;
        }
        const double u = 1.0 - uniform();  // avoid log(0)
        const double a = std::sqrt(-2.0 * std::log(u));
        const double b = 2.0 * 3.14159265358979323846 * uniform();
        spare_ = a * std::sin(b);
        has_spare_ = true;
        return mu + a * std::cos(b) * sigma;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    // Independent child stream.
    Rng fork() { return Rng(gen_()); }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace stylectrl
