#include "specsim/engine.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace specsim {

double CostModel::cost_ratio() const {
    if (t_draft_token <= 0.0) return std::numeric_limits<double>::infinity();
    return t_verify_round / t_draft_token;
}

void CostModel::validate() const {
    if (!(t_verify_round > 0.0)) throw std::invalid_argument("t_verify_round must be > 0");
    if (t_draft_token < 0.0) throw std::invalid_argument("t_draft_token must be >= 0");
    if (t_target_step && *t_target_step < 0.0) {
        throw std::invalid_argument("t_target_step must be >= 0");
    }
    if (t_overhead_stop_check < 0.0) {
        throw std::invalid_argument("t_overhead_stop_check must be >= 0");
    }
}

namespace {

void finalize_round_stats(RunReport& rep) {
    if (rep.total_drafted > 0) {
        rep.acceptance_rate =
            static_cast<double>(rep.total_accepted) / static_cast<double>(rep.total_drafted);
    }
    if (rep.total_rounds > 0) {
        double sum = 0.0;
        double sum_sq = 0.0;
        for (size_t k = 0; k < rep.accepted_count_histogram.size(); ++k) {
            const double count = static_cast<double>(rep.accepted_count_histogram[k]);
            sum += count * static_cast<double>(k);
            sum_sq += count * static_cast<double>(k) * static_cast<double>(k);
        }
        const double n = static_cast<double>(rep.total_rounds);
        rep.mean_accepted = sum / n;
        const double var = sum_sq / n - rep.mean_accepted * rep.mean_accepted;
        rep.std_accepted = var > 0.0 ? std::sqrt(var) : 0.0;
    }
}

}  // namespace

GenerationResult generate_autoregressive(const MarkovModel& target, std::span<const int> prompt,
                                         int n_tokens, const AdjustmentSpec& adjustment,
                                         RngState& rng, const CostModel& cost) {
    if (n_tokens < 1) throw std::invalid_argument("n_tokens must be >= 1");
    cost.validate();
    adjustment.validate(target.vocab_size());

    GenerationResult result;
    std::vector<int> context(prompt.begin(), prompt.end());
    result.tokens.reserve(static_cast<size_t>(n_tokens));
    for (int t = 0; t < n_tokens; ++t) {
        const Distribution dist = adjust(target.next_distribution(context), adjustment);
        const int tok = sample(dist, rng);
        result.tokens.push_back(tok);
        context.push_back(tok);
    }

    RunReport& rep = result.report;
    rep.total_tokens_emitted = static_cast<uint64_t>(n_tokens);
    rep.total_simulated_seconds = static_cast<double>(n_tokens) * cost.target_step();
    rep.tps = static_cast<double>(n_tokens) / rep.total_simulated_seconds;
    return result;
}

GenerationResult generate_speculative(const MarkovModel& target, const MarkovModel& draft,
                                      std::span<const int> prompt, int n_tokens,
                                      const PolicyConfig& policy,
                                      const AdjustmentSpec& adjustment, RngState& rng,
                                      const CostModel& cost,
                                      const SpeculativeOptions& options) {
    if (n_tokens < 1) throw std::invalid_argument("n_tokens must be >= 1");
    if (target.vocab_size() != draft.vocab_size()) {
        throw std::invalid_argument("target and draft models must share a vocab size");
    }
    cost.validate();
    policy.validate();
    adjustment.validate(target.vocab_size());

    const int max_len = policy.max_draft_length;
    const bool is_static = policy.kind == PolicyKind::static_length;

    ControllerState local_controller = ControllerState::init(policy);
    ControllerState* controller = options.controller ? options.controller : &local_controller;

    GenerationResult result;
    RunReport& rep = result.report;
    rep.accepted_count_histogram.assign(static_cast<size_t>(max_len) + 1, 0);

    std::vector<int> context(prompt.begin(), prompt.end());
    std::vector<int> draft_tokens;
    std::vector<Distribution> draft_dists;
    std::vector<Distribution> target_dists;
    std::vector<double> criteria;

    uint64_t round_index = 0;
    while (result.tokens.size() < static_cast<size_t>(n_tokens)) {
        draft_tokens.clear();
        draft_dists.clear();
        target_dists.clear();
        criteria.clear();

        // Drafting phase. The criterion is evaluated on the distribution the
        // next token would be drawn from, before drawing it; a stop means
        // that token is never drafted.
        const size_t context_mark = context.size();
        int stop_checks = 0;
        StopReason round_stop = StopReason::max_length_reached;
        for (int pos = 0; pos < max_len; ++pos) {
            const Distribution& raw = draft.next_distribution(context);
            Distribution adjusted = adjust(raw, adjustment);
            const Distribution& criterion_source =
                policy.entropy_source == EntropySource::raw ? raw : adjusted;
            const StopDecision decision = should_stop(policy, *controller, criterion_source, pos);
            criteria.push_back(decision.criterion_value);
            if (pos >= 1 && !is_static) {
                ++stop_checks;
                if (decision.stop) {
                    round_stop = decision.reason;
                    break;
                }
            }
            const int tok = sample(adjusted, rng);
            draft_tokens.push_back(tok);
            draft_dists.push_back(std::move(adjusted));
            context.push_back(tok);
        }
        const int n_drafted = static_cast<int>(draft_tokens.size());
        assert(n_drafted >= 1);
        context.resize(context_mark);  // verification decides what is kept

        // Parallel verification pass: target conditionals at every drafted
        // position plus the bonus position.
        for (int i = 0; i <= n_drafted; ++i) {
            target_dists.push_back(adjust(target.next_distribution(context), adjustment));
            if (i < n_drafted) context.push_back(draft_tokens[static_cast<size_t>(i)]);
        }
        context.resize(context_mark);

        const VerifyOutcome outcome =
            verify_round(draft_tokens, draft_dists, target_dists, rng, options.verifier);
        assert(static_cast<int>(outcome.emitted_tokens.size()) == outcome.accepted_count + 1);

        result.tokens.insert(result.tokens.end(), outcome.emitted_tokens.begin(),
                             outcome.emitted_tokens.end());
        context.insert(context.end(), outcome.emitted_tokens.begin(),
                       outcome.emitted_tokens.end());

        const double round_time = static_cast<double>(n_drafted) * cost.t_draft_token +
                                  cost.t_verify_round +
                                  static_cast<double>(stop_checks) * cost.t_overhead_stop_check;
        rep.total_simulated_seconds += round_time;
        rep.total_rounds += 1;
        rep.total_drafted += static_cast<uint64_t>(n_drafted);
        rep.total_accepted += static_cast<uint64_t>(outcome.accepted_count);
        rep.accepted_count_histogram[static_cast<size_t>(outcome.accepted_count)] += 1;
        if (outcome.residual_fallback) rep.residual_fallback_count += 1;

        if (options.record_rounds) {
            rep.rounds.push_back(DraftRoundRecord{round_index, n_drafted, outcome.accepted_count,
                                                  round_stop, controller->lambda, criteria,
                                                  round_time});
        }

        if (policy.dynamic_lambda && !is_static) {
            const int max_possible = policy.compare_accepted_to_drafted ? n_drafted : max_len;
            *controller = update_lambda(*controller, n_drafted, outcome.accepted_count,
                                        max_possible);
        }
        ++round_index;
    }

    result.tokens.resize(static_cast<size_t>(n_tokens));
    rep.total_tokens_emitted = static_cast<uint64_t>(n_tokens);
    rep.tps = static_cast<double>(n_tokens) / rep.total_simulated_seconds;
    finalize_round_stats(rep);
    return result;
}

Distribution empirical_output_distribution(const OutputProbe& probe,
                                           std::span<const int> context, int trials) {
    if (probe.target == nullptr) throw std::invalid_argument("probe needs a target model");
    if (probe.target->vocab_size() > 16) {
        throw std::invalid_argument("output probe is limited to vocab sizes <= 16");
    }
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");

    const CostModel cost;  // the clock is irrelevant to the token law
    std::vector<double> counts(static_cast<size_t>(probe.target->vocab_size()), 0.0);
    RngState root(probe.seed);
    for (int t = 0; t < trials; ++t) {
        RngState trial_rng = root.split(static_cast<uint64_t>(t));
        int first_token;
        if (probe.draft == nullptr) {
            first_token = generate_autoregressive(*probe.target, context, 1, probe.adjustment,
                                                  trial_rng, cost)
                              .tokens[0];
        } else {
            SpeculativeOptions options;
            options.verifier = probe.verifier;
            first_token = generate_speculative(*probe.target, *probe.draft, context, 1,
                                               probe.policy, probe.adjustment, trial_rng, cost,
                                               options)
                              .tokens[0];
        }
        counts[static_cast<size_t>(first_token)] += 1.0;
    }
    return Distribution::from_weights(std::move(counts));
}

}  // namespace specsim
