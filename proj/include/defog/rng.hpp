#pragma once

#include <cmath>
#include <cstdint>

namespace defog {

// PCG32 with explicit distribution code so that sequences are reproducible
// across platforms and standard-library versions. Every stochastic choice in
// the pipeline (crops, fog fields, weight init, replay pool) draws from this.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0x14057b7ef767814fULL) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform in [0, 1) with 24 bits of precision.
    float next_float() {
        return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f);
    }

    double next_double() {
        uint64_t hi = next_u32();
        uint64_t lo = next_u32();
        return static_cast<double>((hi << 21) ^ lo) * (1.0 / 9007199254740992.0);
    }

    // One draw, reduced by modulo. Bias is negligible for the n used here.
    uint32_t uniform_below(uint32_t n) {
        return next_u32() % n;
    }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * next_float();
    }

    // Box-Muller; consumes exactly two draws, no cached second value.
    float normal(float mean, float stddev) {
        float u1 = next_float();
        float u2 = next_float();
        float r = std::sqrt(-2.0f * std::log(1.0f - u1));
        float theta = 6.28318530717958647692f * u2;
        return mean + stddev * r * std::cos(theta);
    }

    uint64_t state_word() const { return state_; }
    uint64_t inc_word() const { return inc_; }
    void restore(uint64_t state, uint64_t inc) {
        state_ = state;
        inc_ = inc;
    }

    // Independent child stream, used to derive per-iteration generators so
    // that resumed runs replay the exact same draws without replaying history.
    static Rng derived(uint64_t seed, uint64_t a, uint64_t b = 0) {
        uint64_t mixed = seed;
        mixed ^= a + 0x9e3779b97f4a7c15ULL + (mixed << 6) + (mixed >> 2);
        mixed ^= b + 0x9e3779b97f4a7c15ULL + (mixed << 6) + (mixed >> 2);
        return Rng(mixed, 0x5851f42d4c957f2dULL ^ a ^ (b << 17));
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
};

} // namespace defog
