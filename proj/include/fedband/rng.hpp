// SPDX-License-Identifier: MIT
//
// Deterministic random number generation.
//
// All stochastic behaviour in the library flows through Rng so that runs are
// reproducible bit-for-bit across platforms and compilers.  std::mt19937 /
// std::normal_distribution are deliberately avoided: the standard does not
// pin down the distribution algorithms, so their output may differ between
// standard library implementations.  Instead we use xoshiro256++ seeded via
// SplitMix64, a fixed-consumption Box-Muller transform for normals (exactly
// two uniform draws per normal), and rejection sampling for bounded ints.

#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string_view>

namespace fedband {

// SplitMix64 step: advances `state` and returns the next 64-bit output.
// Used for seeding and for deriving independent substreams from a base seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives a substream seed from (seed, tag).  The tag is hashed with FNV-1a
// and mixed with the seed through SplitMix64, so streams for different tags
// (or different seeds) are statistically independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a offset basis
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;  // FNV-1a prime
    }
    std::uint64_t s = seed ^ h;
    std::uint64_t out = splitmix64(s);
    out ^= splitmix64(s);
    return out;
}

// xoshiro256++ by Blackman & Vigna: fast, 256-bit state, passes BigCrush.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        // Seed the four state words with SplitMix64 as recommended by the
        // xoshiro authors; guarantees a nonzero state.
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller.  Consumes exactly two uniform draws per
    // call (the second Box-Muller output is discarded) so the stream position
    // after a call never depends on the values drawn.
    double gauss() {
        // u1 in (0, 1] so log(u1) is finite.
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n).  Unbiased via rejection sampling; the number
    // of draws consumed depends only on the stream contents, so two runs with
    // the same seed consume identically.
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return static_cast<int>(r % un);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

}  // namespace fedband
