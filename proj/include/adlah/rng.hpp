#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>

#include "adlah/hash.hpp"

namespace adlah {

// xoshiro256** with splitmix64 seeding. Self-contained so that traces,
// training runs and tables are bit-identical across platforms; the standard
// <random> distributions are implementation-defined and unsuitable here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            word = mix64_local(x);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). 128-bit multiply keeps the mapping unbiased
    // enough for simulation purposes and fully deterministic.
    std::uint64_t uniform_int(std::uint64_t n) {
        assert(n > 0);
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Exponential with the given mean (inter-arrival sampling).
    double exponential(double mean) {
        double u = uniform();
        return -mean * std::log1p(-u);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // state capture, for checkpoints that must resume bit-exactly
    std::array<std::uint64_t, 4> state() const {
        return {state_[0], state_[1], state_[2], state_[3]};
    }
    void restore(const std::array<std::uint64_t, 4>& s) {
        for (int i = 0; i < 4; ++i) state_[i] = s[i];
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    static std::uint64_t mix64_local(std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t state_[4];
};

}  // namespace adlah
