#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace specsim {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

bool all_passed(const std::vector<PropertyResult>& results);

// Emitted-token law equals the target conditional for every stopping policy
// (Monte Carlo, TVD < 0.01), and an accept-always verifier visibly breaks it
// (TVD > 0.05) on a divergent pair.
std::vector<PropertyResult> verify_losslessness(uint64_t seed, int trials = 200000);

// Appendix-style information chain over random distribution pairs:
// sum min = 1 - TVD (1e-12), 1 - sqrt(KLD/2) <= 1 - TVD (Pinsker, 1e-12
// slack), CE >= H, and on constructed pairs with CE = (1 + 2*gamma) * H the
// adaedl criterion coincides with the Pinsker bound to 1e-9.
std::vector<PropertyResult> verify_pinsker(uint64_t seed, int random_pairs = 10000,
                                           int constructed_pairs = 1000);

// Hand-traced controller updates plus direction / fixed-point / clamp
// properties over randomized update sequences.
std::vector<PropertyResult> verify_controller(uint64_t seed, int random_updates = 10000);

// Simulated-clock exactness: autoregressive time = n * t_step, per-round
// times recompute bitwise from the cost formula, totals are the in-order
// sum of the rounds, and the all-accept / all-reject TPS arithmetic holds.
std::vector<PropertyResult> verify_clock(uint64_t seed);

}  // namespace specsim
