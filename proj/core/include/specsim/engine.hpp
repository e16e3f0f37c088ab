#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "specsim/distribution.hpp"
#include "specsim/markov_model.hpp"
#include "specsim/rng.hpp"
#include "specsim/sampling.hpp"
#include "specsim/stopping.hpp"

namespace specsim {

// Simulated wall-clock costs, in seconds. One target verification pass
// costs the same regardless of how many positions it scores (parallel
// verification), and by default a plain autoregressive step costs the same
// as a verification pass.
struct CostModel {
    double t_draft_token = 0.0;
    double t_verify_round = 1.0;
    std::optional<double> t_target_step;  // defaults to t_verify_round
    double t_overhead_stop_check = 0.0;

    double target_step() const { return t_target_step ? *t_target_step : t_verify_round; }
    double cost_ratio() const;  // t_verify_round / t_draft_token (inf when free)
    void validate() const;

    bool operator==(const CostModel&) const = default;
};

struct DraftRoundRecord {
    uint64_t round_index = 0;
    int n_drafted = 0;
    int n_accepted = 0;
    StopReason stop_reason = StopReason::max_length_reached;
    double lambda_at_round = 0.0;  // threshold in force during the round
    // Criterion value before each drafted token, plus the value that
    // triggered an early stop when there was one.
    std::vector<double> criterion_values;
    double simulated_time = 0.0;

    bool operator==(const DraftRoundRecord&) const = default;
};

struct RunReport {
    uint64_t total_tokens_emitted = 0;
    double total_simulated_seconds = 0.0;
    double tps = 0.0;
    double acceptance_rate = 0.0;  // sum accepted / sum drafted; 0 when nothing drafted
    std::vector<uint64_t> accepted_count_histogram;  // indexed 0..L; empty for autoregressive
    double mean_accepted = 0.0;
    double std_accepted = 0.0;
    std::vector<DraftRoundRecord> rounds;  // populated only when requested
    uint64_t residual_fallback_count = 0;

    uint64_t total_rounds = 0;
    uint64_t total_drafted = 0;
    uint64_t total_accepted = 0;

    bool operator==(const RunReport&) const = default;
};

struct GenerationResult {
    std::vector<int> tokens;
    RunReport report;

    bool operator==(const GenerationResult&) const = default;
};

struct SpeculativeOptions {
    bool record_rounds = false;
    // When set, the controller persists across calls (for cross-prompt
    // studies); otherwise each call starts from ControllerState::init.
    ControllerState* controller = nullptr;
    VerifierMode verifier = VerifierMode::rejection;
};

// Plain autoregressive decoding of n_tokens tokens from the target model.
GenerationResult generate_autoregressive(const MarkovModel& target, std::span<const int> prompt,
                                         int n_tokens, const AdjustmentSpec& adjustment,
                                         RngState& rng, const CostModel& cost);

// Speculative decoding: repeated draft rounds (the stopping policy is
// consulted before tokens 2..L of each round), one parallel verification
// per round, dynamic threshold updates when enabled. Rounds repeat until
// n_tokens tokens have been emitted; the output is truncated to exactly
// n_tokens but the clock keeps the full cost of the final round.
//
// RNG consumption order per round: one uniform per drafted token, then
// verify_round's draws (one per examined position plus the replacement or
// bonus draw).
GenerationResult generate_speculative(const MarkovModel& target, const MarkovModel& draft,
                                      std::span<const int> prompt, int n_tokens,
                                      const PolicyConfig& policy,
                                      const AdjustmentSpec& adjustment, RngState& rng,
                                      const CostModel& cost,
                                      const SpeculativeOptions& options = {});

// Monte-Carlo probe of the first-emitted-token law under a decoding setup;
// the yardstick for the losslessness guarantee. draft == nullptr probes
// plain autoregressive decoding. Requires vocab size <= 16.
struct OutputProbe {
    const MarkovModel* target = nullptr;
    const MarkovModel* draft = nullptr;
    PolicyConfig policy;
    AdjustmentSpec adjustment;
    VerifierMode verifier = VerifierMode::rejection;
    uint64_t seed = 0;
};

Distribution empirical_output_distribution(const OutputProbe& probe,
                                           std::span<const int> context, int trials);

}  // namespace specsim
