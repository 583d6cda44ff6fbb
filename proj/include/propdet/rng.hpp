#pragma once

// Portable seeded randomness. std::uniform_int_distribution and friends are
// implementation-defined, so every draw here is built directly on the raw
// 64-bit engine output to keep runs byte-identical across standard libraries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace propdet {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Independent stream for a named stage, so adding draws in one stage never
// shifts another stage's sequence.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
    return splitmix64(seed ^ splitmix64(fnv1a64(stream)));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, n). Rejection sampling removes modulo bias.
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Box-Muller; one value per call keeps the stream simple to reason about.
    double normal() {
        double u1 = unit();
        while (u1 <= 0.0) u1 = unit();
        const double u2 = unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    bool bernoulli(double p) { return unit() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // k distinct indices from [0, n), returned in increasing order.
    std::vector<std::size_t> sample_sorted(std::size_t n, std::size_t k) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t i = 0; i < k && i < n; ++i) {
            std::swap(all[i], all[i + index(n - i)]);
        }
        all.resize(std::min(k, n));
        std::sort(all.begin(), all.end());
        return all;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace propdet
