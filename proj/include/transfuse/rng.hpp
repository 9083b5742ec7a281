#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace transfuse {

// Seeded random stream. std::mt19937_64 is fully specified by the standard,
// but the <random> distributions are not, so the draws below are hand-rolled
// to keep outputs identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Unbiased integer in [0, n).
    int uniform_int(int n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller. The second value is discarded so each
    // call consumes exactly two uniforms.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Normal with std dev `stddev`, resampled until within `trunc` stddevs.
    double truncated_normal(double stddev, double trunc = 2.0) {
        double z = normal();
        while (z < -trunc || z > trunc) z = normal();
        return z * stddev;
    }

    // Derive an independent child seed; advances this stream by one draw.
    std::uint64_t fork_seed() { return splitmix64(gen_()); }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Stable label-derived stream id, for named substreams of a master seed.
    static std::uint64_t stream_seed(std::uint64_t master, std::string_view label) {
        std::uint64_t h = 1469598103934665603ULL;
        for (const char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        return splitmix64(master ^ h);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace transfuse
