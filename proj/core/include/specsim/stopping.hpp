#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specsim/distribution.hpp"

namespace specsim {

enum class PolicyKind { static_length, max_confidence, adaedl };
enum class EntropySource { raw, adjusted };

std::string to_string(PolicyKind kind);
std::string to_string(EntropySource source);

// Early draft-stopping policy plus the dynamic-threshold controller knobs.
struct PolicyConfig {
    PolicyKind kind = PolicyKind::static_length;
    int max_draft_length = 7;  // L
    double gamma = 0.2;        // entropy factor of the adaedl criterion
    double initial_lambda = 0.5;
    bool dynamic_lambda = false;
    // Which distribution the criterion sees: the raw model row or the
    // sampling-adjusted one tokens are actually drawn from (default).
    EntropySource entropy_source = EntropySource::adjusted;

    // Controller hyperparameters.
    double alpha = 0.9;    // target acceptance rate
    double epsilon = 0.01; // threshold step size
    double beta1 = 0.5;    // acceptance-rate EMA coefficient
    double beta2 = 0.9;    // threshold EMA coefficient

    // Controller variant: compare n_accepted against n_drafted instead of
    // against max_draft_length in the decrease branch.
    bool compare_accepted_to_drafted = false;
    // Keep one controller across all prompts of a run instead of resetting
    // per generation.
    bool persist_controller_across_prompts = false;

    void validate() const;                 // throws std::invalid_argument
    std::vector<std::string> warnings() const;

    bool operator==(const PolicyConfig&) const = default;
};

// Mutable threshold-controller state owned by a single generation run.
struct ControllerState {
    double lambda = 0.5;
    double ar_ema = 0.9;  // EMA of per-round acceptance rates
    double alpha = 0.9;
    double epsilon = 0.01;
    double beta1 = 0.5;
    double beta2 = 0.9;
    uint64_t rounds_seen = 0;

    // Starts at lambda0 with a neutral acceptance-rate EMA of alpha, so the
    // threshold does not move until evidence accumulates.
    static ControllerState init(const PolicyConfig& policy);

    bool operator==(const ControllerState&) const = default;
};

enum class StopReason { criterion_below_threshold, max_length_reached, continue_drafting };

std::string to_string(StopReason reason);
StopReason stop_reason_from_string(const std::string& s);

struct StopDecision {
    bool stop = false;
    double criterion_value = 0.0;
    StopReason reason = StopReason::continue_drafting;
};

// 1 - sqrt(gamma * H(d)); an approximate lower bound on the acceptance
// probability of a token drafted from d. May be negative; never clamped.
double criterion_adaedl(const Distribution& d, double gamma);

// Largest single-token probability of d.
double criterion_max_confidence(const Distribution& d);

// The value the policy's criterion takes on d. Static policies report the
// adaedl criterion (with the configured gamma) as a what-if value; it never
// influences their stopping.
double policy_criterion(const PolicyConfig& policy, const Distribution& d);

// Decides whether to stop drafting before drawing the next token, whose
// distribution is next_dist. Never stops before the first token of a round;
// stops unconditionally once tokens_drafted reaches max_draft_length.
StopDecision should_stop(const PolicyConfig& policy, const ControllerState& state,
                         const Distribution& next_dist, int tokens_drafted);

// One dynamic-threshold update after a drafting round: blends the round's
// acceptance rate into the EMA, nudges lambda by epsilon toward the target
// acceptance rate (unless already drafting max_possible tokens), blends the
// nudge through the beta2 EMA, and clamps lambda to [0, 1].
ControllerState update_lambda(ControllerState state, int n_drafted, int n_accepted,
                              int max_possible);

}  // namespace specsim
