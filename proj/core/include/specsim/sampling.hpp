#pragma once

#include <optional>
#include <span>
#include <vector>

#include "specsim/distribution.hpp"
#include "specsim/rng.hpp"

namespace specsim {

// Draws one token id by inverse-CDF walk; consumes exactly one uniform.
int sample(const Distribution& d, RngState& rng);

// accept_always bypasses the rejection test; it exists as a negative
// control for the losslessness checks and must never be used for real runs.
enum class VerifierMode { rejection, accept_always };

struct VerifyOutcome {
    int accepted_count = 0;                // in [0, n]
    std::vector<int> emitted_tokens;       // accepted prefix + one extra token
    std::optional<int> rejection_index;    // set iff accepted_count < n
    bool bonus_token_used = false;
    bool residual_fallback = false;        // residual() degenerated to target

    bool operator==(const VerifyOutcome&) const = default;
};

// One parallel verification pass over n drafted tokens. target_dists holds
// n + 1 distributions: one per drafted position plus the bonus position.
// Token i is accepted with probability min(1, p_target(d_i) / p_draft(d_i));
// the first rejection emits a replacement from the residual distribution,
// and a fully accepted round emits a bonus token from target_dists[n].
//
// RNG consumption order: one uniform per examined position, then one
// uniform for the replacement or bonus draw.
VerifyOutcome verify_round(std::span<const int> draft_tokens,
                           std::span<const Distribution> draft_dists,
                           std::span<const Distribution> target_dists,
                           RngState& rng,
                           VerifierMode mode = VerifierMode::rejection);

}  // namespace specsim
