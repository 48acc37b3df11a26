#pragma once

#include <cmath>
#include <cstdint>

namespace swarmctl {

/// MT19937 (32-bit) with the standard 2002 seeding and tempering. Written
/// out in full so the simulator does not depend on any particular standard
/// library's engine; conformance is pinned by tests against an independent
/// reference.
class Mt19937State {
  public:
    static constexpr std::uint32_t kDefaultSeed = 5489u;

    explicit Mt19937State(std::uint32_t seed = kDefaultSeed) { reseed(seed); }

    void reseed(std::uint32_t seed) {
        state_[0] = seed;
        for (index_ = 1; index_ < kN; ++index_) {
            state_[index_] =
                1812433253u * (state_[index_ - 1] ^ (state_[index_ - 1] >> 30)) + index_;
        }
    }

    std::uint32_t next_u32() {
        if (index_ >= kN) twist();
        std::uint32_t y = state_[index_++];
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c5680u;
        y ^= (y << 15) & 0xefc60000u;
        y ^= y >> 18;
        return y;
    }

    /// Uniform double in [0, 1) with 53-bit resolution (two draws).
    double next_double() {
        const std::uint32_t a = next_u32() >> 5;
        const std::uint32_t b = next_u32() >> 6;
        return (a * 67108864.0 + b) / 9007199254740992.0;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be > 0; modulo bias is irrelevant
    /// at simulator scales.
    std::uint32_t below(std::uint32_t n) { return next_u32() % n; }

    /// Standard normal via Box-Muller. Consumes draws in pairs so replay
    /// is independent of call interleaving.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        const double u2 = next_double();
        if (u1 <= 0.0) u1 = 1.0 / 9007199254740992.0;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    static constexpr std::uint32_t kN = 624;
    static constexpr std::uint32_t kM = 397;
    static constexpr std::uint32_t kMatrixA = 0x9908b0dfu;
    static constexpr std::uint32_t kUpperMask = 0x80000000u;
    static constexpr std::uint32_t kLowerMask = 0x7fffffffu;

    void twist() {
        for (std::uint32_t i = 0; i < kN; ++i) {
            const std::uint32_t y =
                (state_[i] & kUpperMask) | (state_[(i + 1) % kN] & kLowerMask);
            state_[i] = state_[(i + kM) % kN] ^ (y >> 1) ^ ((y & 1u) * kMatrixA);
        }
        index_ = 0;
    }

    std::uint32_t state_[kN] = {};
    std::uint32_t index_ = kN;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Deterministic stream splitting: derive an independent 32-bit seed from a
/// base seed and a stream tag (splitmix-style mixing).
inline std::uint32_t derive_seed(std::uint32_t base, std::uint32_t stream) {
    std::uint64_t z = (static_cast<std::uint64_t>(base) << 32) ^ (stream * 0x9e3779b97f4a7c15ull);
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return static_cast<std::uint32_t>(z & 0xffffffffull);
}

}  // namespace swarmctl
