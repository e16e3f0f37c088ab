#include <cmath>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "specsim/engine.hpp"

using namespace specsim;

namespace {

CostModel paper_ratio_cost() {
    CostModel cost;
    cost.t_draft_token = 0.004;
    cost.t_verify_round = 0.04;
    return cost;
}

PolicyConfig static_policy(int max_len) {
    PolicyConfig policy;
    policy.kind = PolicyKind::static_length;
    policy.max_draft_length = max_len;
    return policy;
}

}  // namespace

TEST_CASE("cost model validation and ratio") {
    CostModel cost;
    cost.t_verify_round = 0.0;
    CHECK_THROWS_AS(cost.validate(), std::invalid_argument);
    cost.t_verify_round = 0.04;
    cost.t_draft_token = -1.0;
    CHECK_THROWS_AS(cost.validate(), std::invalid_argument);
    cost.t_draft_token = 0.004;
    CHECK_NOTHROW(cost.validate());
    CHECK(cost.cost_ratio() == doctest::Approx(10.0));
    CHECK(cost.target_step() == 0.04);
    cost.t_target_step = 0.1;
    CHECK(cost.target_step() == 0.1);
    cost.t_draft_token = 0.0;
    CHECK(std::isinf(cost.cost_ratio()));
}

TEST_CASE("autoregressive clock and determinism") {
    const MarkovModel target = MarkovModel::random_target(8, 1, 0.7, 100);
    CostModel cost;
    cost.t_verify_round = 0.04;
    const std::vector<int> prompt{0, 1};

    RngState rng(1);
    const GenerationResult run = generate_autoregressive(target, prompt, 100, {}, rng, cost);
    CHECK(run.tokens.size() == 100);
    CHECK(run.report.total_tokens_emitted == 100);
    CHECK(run.report.tps == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(run.report.total_rounds == 0);
    CHECK(run.report.accepted_count_histogram.empty());

    RngState rng2(1);
    const GenerationResult again = generate_autoregressive(target, prompt, 100, {}, rng2, cost);
    CHECK(run == again);

    // A deterministic chain of one-hot rows emits a fixed cycle.
    std::vector<Distribution> rows;
    for (int i = 0; i < 4; ++i) rows.push_back(Distribution::one_hot(4, (i + 1) % 4));
    const MarkovModel cycle(4, 1, 0, rows);
    RngState rng3(2);
    const GenerationResult walk =
        generate_autoregressive(cycle, std::vector<int>{0}, 6, {}, rng3, cost);
    CHECK(walk.tokens == std::vector<int>{1, 2, 3, 0, 1, 2});
}

TEST_CASE("speculative all-accept and all-reject regimes") {
    const CostModel cost = paper_ratio_cost();

    SUBCASE("identical models accept every draft") {
        const MarkovModel target = MarkovModel::random_target(8, 1, 0.7, 5);
        RngState rng(3);
        SpeculativeOptions options;
        options.record_rounds = true;
        const GenerationResult run = generate_speculative(
            target, target, std::vector<int>{0}, 96, static_policy(7), {}, rng, cost, options);
        const RunReport& rep = run.report;
        CHECK(rep.total_rounds == 12);
        CHECK(rep.accepted_count_histogram[7] == 12);
        CHECK(rep.acceptance_rate == 1.0);
        CHECK(rep.mean_accepted == 7.0);
        CHECK(rep.std_accepted == 0.0);
        // 8 tokens per round at 7 * 0.004 + 0.04 seconds per round.
        CHECK(rep.tps == doctest::Approx(8.0 / 0.068).epsilon(1e-9));
        for (const DraftRoundRecord& round : rep.rounds) {
            CHECK(round.n_drafted == 7);
            CHECK(round.n_accepted == 7);
            CHECK(round.stop_reason == StopReason::max_length_reached);
        }
    }

    SUBCASE("disjoint-support models reject every draft") {
        std::vector<Distribution> t_rows(2, Distribution::one_hot(2, 0));
        std::vector<Distribution> d_rows(2, Distribution::one_hot(2, 1));
        const MarkovModel target(2, 1, 0, t_rows);
        const MarkovModel draft(2, 1, 0, d_rows);
        RngState rng(4);
        const GenerationResult run = generate_speculative(
            target, draft, std::vector<int>{0}, 50, static_policy(7), {}, rng, cost, {});
        const RunReport& rep = run.report;
        CHECK(rep.total_rounds == 50);
        CHECK(rep.accepted_count_histogram[0] == 50);
        CHECK(rep.acceptance_rate == 0.0);
        CHECK(rep.tps == doctest::Approx(1.0 / 0.068).epsilon(1e-9));
        CHECK(rep.tps < 25.0);
        for (int tok : run.tokens) CHECK(tok == 0);  // every round emits the residual token
    }
}

TEST_CASE("tokens per round and clock additivity") {
    const MarkovModel target = MarkovModel::random_target(16, 1, 0.4, 31);
    DerivedDraftSpec spec;
    spec.mode = DerivedDraftSpec::Mode::dirichlet_resample;
    spec.strength = 0.6;
    spec.seed = 32;
    const MarkovModel draft = MarkovModel::derive_draft(target, spec);

    PolicyConfig policy;
    policy.kind = PolicyKind::adaedl;
    policy.max_draft_length = 5;
    policy.dynamic_lambda = true;
    CostModel cost = paper_ratio_cost();
    cost.t_overhead_stop_check = 0.0002;

    RngState rng(5);
    SpeculativeOptions options;
    options.record_rounds = true;
    const GenerationResult run = generate_speculative(target, draft, std::vector<int>{0, 1}, 300,
                                                      policy, {}, rng, cost, options);
    const RunReport& rep = run.report;

    uint64_t emitted = 0;
    double time_sum = 0.0;
    for (const DraftRoundRecord& round : rep.rounds) {
        CHECK(round.n_accepted <= round.n_drafted);
        CHECK(round.n_drafted >= 1);
        CHECK(round.n_drafted <= 5);
        emitted += static_cast<uint64_t>(round.n_accepted) + 1;
        time_sum += round.simulated_time;
        const size_t expected_criteria = round.stop_reason ==
                                                 StopReason::criterion_below_threshold
                                             ? static_cast<size_t>(round.n_drafted) + 1
                                             : static_cast<size_t>(round.n_drafted);
        CHECK(round.criterion_values.size() == expected_criteria);
    }
    CHECK(emitted >= rep.total_tokens_emitted);
    CHECK(emitted < rep.total_tokens_emitted + 6);  // at most one over-full round
    CHECK(time_sum == rep.total_simulated_seconds);
    const uint64_t hist_sum = std::accumulate(rep.accepted_count_histogram.begin(),
                                              rep.accepted_count_histogram.end(), uint64_t{0});
    CHECK(hist_sum == rep.total_rounds);
    CHECK(rep.tps == rep.total_tokens_emitted / rep.total_simulated_seconds);
}

TEST_CASE("adaedl on one-hot draft rows mirrors the static policy") {
    // Deterministic draft rows have zero entropy, so the criterion is 1 and
    // never crosses any lambda < 1; with zero stop-check overhead the rounds
    // match the static policy exactly.
    std::vector<Distribution> draft_rows;
    for (int i = 0; i < 6; ++i) draft_rows.push_back(Distribution::one_hot(6, (i * 2 + 1) % 6));
    const MarkovModel draft(6, 1, 77, draft_rows);
    const MarkovModel target = MarkovModel::random_target(6, 1, 0.5, 78);
    const CostModel cost = paper_ratio_cost();

    PolicyConfig adaedl;
    adaedl.kind = PolicyKind::adaedl;
    adaedl.max_draft_length = 4;
    adaedl.dynamic_lambda = true;
    adaedl.initial_lambda = 0.9;

    RngState rng_a(6);
    RngState rng_b(6);
    SpeculativeOptions options;
    options.record_rounds = true;
    const GenerationResult adaptive = generate_speculative(
        target, draft, std::vector<int>{2}, 200, adaedl, {}, rng_a, cost, options);
    const GenerationResult fixed = generate_speculative(
        target, draft, std::vector<int>{2}, 200, static_policy(4), {}, rng_b, cost, options);

    CHECK(adaptive.tokens == fixed.tokens);
    CHECK(adaptive.report.total_rounds == fixed.report.total_rounds);
    CHECK(adaptive.report.accepted_count_histogram == fixed.report.accepted_count_histogram);
    CHECK(adaptive.report.total_simulated_seconds == fixed.report.total_simulated_seconds);
    for (const DraftRoundRecord& round : adaptive.report.rounds) {
        CHECK(round.n_drafted == 4);
    }
}

TEST_CASE("losslessness of the emitted-token law per policy") {
    const MarkovModel target = MarkovModel::random_target(4, 1, 0.6, 41);
    const MarkovModel draft = MarkovModel::random_target(4, 1, 0.6, 42);
    const std::vector<int> context{2};
    const Distribution& truth = target.next_distribution(context);
    const int trials = 50000;

    PolicyConfig max_conf;
    max_conf.kind = PolicyKind::max_confidence;
    max_conf.max_draft_length = 4;
    max_conf.initial_lambda = 0.5;
    max_conf.dynamic_lambda = true;
    PolicyConfig adaedl = max_conf;
    adaedl.kind = PolicyKind::adaedl;
    adaedl.initial_lambda = 0.4;

    for (const PolicyConfig& policy : {static_policy(4), max_conf, adaedl}) {
        OutputProbe probe;
        probe.target = &target;
        probe.draft = &draft;
        probe.policy = policy;
        probe.seed = 43;
        const Distribution empirical = empirical_output_distribution(probe, context, trials);
        CHECK(tvd(empirical, truth) < 0.02);
    }

    SUBCASE("autoregressive probe matches the row") {
        OutputProbe probe;
        probe.target = &target;
        probe.seed = 44;
        CHECK(tvd(empirical_output_distribution(probe, context, trials), truth) < 0.02);
    }

    SUBCASE("accept-always negative control distorts the law") {
        OutputProbe probe;
        probe.target = &target;
        probe.draft = &draft;
        probe.policy = static_policy(4);
        probe.verifier = VerifierMode::accept_always;
        probe.seed = 45;
        const Distribution empirical = empirical_output_distribution(probe, context, trials);
        CHECK(tvd(empirical, truth) > 0.05);
    }

    SUBCASE("vocab cap is enforced") {
        const MarkovModel big = MarkovModel::random_target(32, 0, 0.5, 46);
        OutputProbe probe;
        probe.target = &big;
        CHECK_THROWS_AS(empirical_output_distribution(probe, context, 10), std::invalid_argument);
    }
}

TEST_CASE("stronger perturbation never helps acceptance") {
    const CostModel cost = paper_ratio_cost();
    for (auto mode : {DerivedDraftSpec::Mode::temperature_perturb,
                      DerivedDraftSpec::Mode::mixture_with_uniform,
                      DerivedDraftSpec::Mode::dirichlet_resample}) {
        double previous = 2.0;
        for (double strength : {0.0, 0.3, 0.6, 0.9}) {
            double rate_sum = 0.0;
            for (uint64_t seed = 0; seed < 6; ++seed) {
                const MarkovModel target = MarkovModel::random_target(16, 1, 0.5, 900 + seed);
                DerivedDraftSpec spec;
                spec.mode = mode;
                spec.strength = strength;
                spec.seed = 1000 + seed;
                const MarkovModel draft = MarkovModel::derive_draft(target, spec);
                RngState rng(seed);
                const GenerationResult run =
                    generate_speculative(target, draft, std::vector<int>{0}, 400,
                                         static_policy(5), {}, rng, cost, {});
                rate_sum += run.report.acceptance_rate;
            }
            const double mean_rate = rate_sum / 6.0;
            CHECK(mean_rate <= previous + 0.02);  // one-sided statistical slack
            previous = mean_rate;
        }
    }
}

TEST_CASE("criterion source and controller variants change behavior") {
    const MarkovModel target = MarkovModel::random_target(16, 1, 0.4, 61);
    DerivedDraftSpec spec;
    spec.mode = DerivedDraftSpec::Mode::dirichlet_resample;
    spec.strength = 0.6;
    spec.seed = 62;
    const MarkovModel draft = MarkovModel::derive_draft(target, spec);
    const CostModel cost = paper_ratio_cost();
    const std::vector<int> prompt{3};

    PolicyConfig policy;
    policy.kind = PolicyKind::adaedl;
    policy.max_draft_length = 6;
    policy.dynamic_lambda = true;
    policy.initial_lambda = 0.4;

    SUBCASE("entropy_source matters only under a real adjustment") {
        AdjustmentSpec hot;
        hot.temperature = 2.0;
        PolicyConfig raw = policy;
        raw.entropy_source = EntropySource::raw;
        PolicyConfig adjusted = policy;
        adjusted.entropy_source = EntropySource::adjusted;

        RngState a(9);
        RngState b(9);
        const GenerationResult with_raw =
            generate_speculative(target, draft, prompt, 300, raw, hot, a, cost, {});
        const GenerationResult with_adjusted =
            generate_speculative(target, draft, prompt, 300, adjusted, hot, b, cost, {});
        CHECK(with_raw != with_adjusted);

        RngState c(9);
        RngState d(9);
        const GenerationResult raw_t1 =
            generate_speculative(target, draft, prompt, 300, raw, {}, c, cost, {});
        const GenerationResult adjusted_t1 =
            generate_speculative(target, draft, prompt, 300, adjusted, {}, d, cost, {});
        CHECK(raw_t1 == adjusted_t1);
    }

    SUBCASE("comparing acceptance to n_drafted changes the threshold path") {
        PolicyConfig variant = policy;
        variant.compare_accepted_to_drafted = true;
        RngState a(10);
        RngState b(10);
        SpeculativeOptions options;
        options.record_rounds = true;
        const GenerationResult vs_length =
            generate_speculative(target, draft, prompt, 400, policy, {}, a, cost, options);
        const GenerationResult vs_drafted =
            generate_speculative(target, draft, prompt, 400, variant, {}, b, cost, options);
        bool lambda_diverged = false;
        const size_t shared =
            std::min(vs_length.report.rounds.size(), vs_drafted.report.rounds.size());
        for (size_t i = 0; i < shared; ++i) {
            if (vs_length.report.rounds[i].lambda_at_round !=
                vs_drafted.report.rounds[i].lambda_at_round) {
                lambda_diverged = true;
                break;
            }
        }
        CHECK(lambda_diverged);
    }

    SUBCASE("an external controller persists across calls") {
        ControllerState controller = ControllerState::init(policy);
        SpeculativeOptions options;
        options.controller = &controller;
        RngState a(11);
        generate_speculative(target, draft, prompt, 200, policy, {}, a, cost, options);
        const double lambda_after_first = controller.lambda;
        CHECK(controller.rounds_seen > 0);
        generate_speculative(target, draft, prompt, 200, policy, {}, a, cost, options);
        CHECK(controller.rounds_seen > 0);
        // The second run started from the first run's threshold.
        CHECK(lambda_after_first != policy.initial_lambda);
    }
}

TEST_CASE("speculative runs are reproducible and validated") {
    const MarkovModel target = MarkovModel::random_target(8, 1, 0.5, 51);
    DerivedDraftSpec spec;
    spec.mode = DerivedDraftSpec::Mode::mixture_with_uniform;
    spec.strength = 0.4;
    const MarkovModel draft = MarkovModel::derive_draft(target, spec);
    const CostModel cost = paper_ratio_cost();

    PolicyConfig policy;
    policy.kind = PolicyKind::max_confidence;
    policy.max_draft_length = 6;
    policy.dynamic_lambda = true;

    RngState a(7);
    RngState b(7);
    SpeculativeOptions options;
    options.record_rounds = true;
    const GenerationResult run_a = generate_speculative(target, draft, std::vector<int>{1}, 256,
                                                        policy, {}, a, cost, options);
    const GenerationResult run_b = generate_speculative(target, draft, std::vector<int>{1}, 256,
                                                        policy, {}, b, cost, options);
    CHECK(run_a == run_b);

    const MarkovModel other = MarkovModel::random_target(4, 1, 0.5, 52);
    RngState c(8);
    CHECK_THROWS_AS(generate_speculative(target, other, std::vector<int>{1}, 10, policy, {}, c,
                                         cost, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_speculative(target, draft, std::vector<int>{1}, 0, policy, {}, c,
                                         cost, {}),
                    std::invalid_argument);
}
