#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace groupforge {

// Deterministic seeding utilities. Every stochastic code path in the library
// derives its stream from explicit 64-bit seeds through these helpers, so a
// (seed, key) pair maps to the same draws on every platform. mt19937_64 is
// fully specified by the standard; the std::*_distribution adapters are not,
// so we never use them.

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Modulo reduction: the tiny bias is
    // irrelevant here and the result is reproducible everywhere.
    std::uint64_t bounded(std::uint64_t n) { return engine_() % n; }

    // Index drawn from an unnormalized nonnegative weight vector.
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = next_double() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace groupforge
