#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fatlab {

// Deterministic RNG. Distributions are implemented here rather than taken
// from <random> because libstdc++/libc++ produce different streams for the
// same engine state; results must be reproducible from the seed alone.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double next_double() {
        return (eng_() >> 11) * 0x1.0p-53;
    }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(next_double()) * (hi - lo);
    }

    // Box-Muller; one value per call, cache the partner.
    float normal(float mu = 0.0f, float sigma = 1.0f) {
        if (have_spare_) {
            have_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = static_cast<float>(r * std::sin(a));
        have_spare_ = true;
        return mu + sigma * static_cast<float>(r * std::cos(a));
    }

    // integer in [0, n)
    int64_t next_index(int64_t n) {
        return static_cast<int64_t>(next_double() * static_cast<double>(n));
    }

    // Fisher-Yates over an index array.
    template <typename T>
    void shuffle(T* a, int64_t n) {
        for (int64_t i = n - 1; i > 0; --i) {
            int64_t j = next_index(i + 1);
            T t = a[i];
            a[i] = a[j];
            a[j] = t;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        shuffle(v.data(), static_cast<int64_t>(v.size()));
    }

private:
    std::mt19937_64 eng_;
    float spare_ = 0.0f;
    bool have_spare_ = false;
};

}  // namespace fatlab
