#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace flgcn {

/// splitmix64 finalizer; bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of `base`: mix64(base XOR mix64(index + 1)).
/// Distinct indices give statistically independent streams; the whole scheme
/// is the one source of per-episode randomness, so runs are reproducible from
/// a single base seed.
constexpr std::uint64_t derive_stream(std::uint64_t base, std::uint64_t index) {
    return mix64(base ^ mix64(index + 1));
}

/// mt19937_64 with explicit distribution code. The engine is fully specified
/// by the standard and the distributions below avoid the implementation-defined
/// std::*_distribution, so sequences are reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t rem = (max % n + 1) % n; // 2^64 mod n
        const std::uint64_t bound = max - rem;
        for (;;) {
            std::uint64_t x = next_u64();
            if (x <= bound) return x % n;
        }
    }

    /// Uniform double in [0, 1), 53 random bits.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller. No caching: every call consumes exactly
    /// two engine draws, which keeps call sites order-independent.
    double normal() {
        double u1 = 1.0 - uniform01(); // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace flgcn
