#pragma once

#include <cstdint>

namespace specsim {

// Counter-based deterministic generator (splitmix64 finalizer over
// seed + counter * golden-gamma). Identical state produces an identical
// draw sequence on every platform, and independent streams can be derived
// from a parent state without sharing any mutable state.
class RngState {
public:
    RngState() : RngState(0) {}
    explicit RngState(uint64_t seed) : seed_(seed), counter_(0) {}

    static constexpr const char* algorithm() { return "splitmix64"; }

    uint64_t next_u64() {
        counter_ += 1;
        return mix(seed_ + counter_ * kGamma);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Multiply-shift reduction; the bias of
    // ~n/2^64 is far below anything observable here.
    int next_below(int n) {
        const unsigned __int128 wide =
            static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
        return static_cast<int>(wide >> 64);
    }

    // Derives an independent stream; deterministic in (seed, stream).
    // Does not consume draws from this state.
    RngState split(uint64_t stream) const {
        return RngState(mix(seed_ ^ mix(stream + kStreamSalt)));
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    bool operator==(const RngState&) const = default;

private:
    static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ull;
    static constexpr uint64_t kStreamSalt = 0x632BE59BD9B4E019ull;

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    uint64_t counter_;
};

}  // namespace specsim
