#include "specsim/verify_suites.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "specsim/engine.hpp"
#include "specsim/harness.hpp"

namespace specsim {

namespace {

PropertyResult make_result(const std::string& name, bool passed, const std::string& detail) {
    return PropertyResult{name, passed, detail};
}

// One random categorical distribution: a single Dirichlet row, reusing the
// order-0 model constructor.
Distribution random_distribution(int vocab_size, double concentration, uint64_t seed) {
    return MarkovModel::random_target(vocab_size, 0, concentration, seed).row(0);
}

// log(sum exp(x_i)) with the usual max shift.
double log_sum_exp(const std::vector<double>& x) {
    const double m = *std::max_element(x.begin(), x.end());
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

// Escort family d^b / Z(b). CE(d, escort(d, b)) = b * H(d) + log Z(b) is
// convex with its minimum H(d) at b = 1, so it grows monotonically for
// b >= 1 and a bisection can hit any reachable cross-entropy target.
struct EscortSolver {
    std::vector<double> log_d;
    double h;

    explicit EscortSolver(const Distribution& d) : h(entropy(d)) {
        log_d.reserve(static_cast<size_t>(d.size()));
        for (int i = 0; i < d.size(); ++i) log_d.push_back(std::log(d[i]));
    }

    double cross_entropy_at(double b) const {
        std::vector<double> scaled(log_d.size());
        for (size_t i = 0; i < log_d.size(); ++i) scaled[i] = b * log_d[i];
        return b * h + log_sum_exp(scaled);
    }

    // Returns nullopt when the target is unreachable below the bracket cap.
    std::optional<Distribution> solve(double ce_target) const {
        double lo = 1.0;
        double hi = 2.0;
        while (cross_entropy_at(hi) < ce_target) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e9) return std::nullopt;
        }
        for (int iter = 0; iter < 200; ++iter) {
            const double mid = 0.5 * (lo + hi);
            if (cross_entropy_at(mid) < ce_target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        const double b = 0.5 * (lo + hi);
        std::vector<double> scaled(log_d.size());
        for (size_t i = 0; i < log_d.size(); ++i) scaled[i] = b * log_d[i];
        const double lz = log_sum_exp(scaled);
        std::vector<double> q(log_d.size());
        for (size_t i = 0; i < q.size(); ++i) q[i] = std::exp(scaled[i] - lz);
        for (double v : q) {
            if (v <= 0.0) return std::nullopt;  // underflow would fake an infinite KLD
        }
        return Distribution::from_weights(std::move(q));
    }
};

}  // namespace

bool all_passed(const std::vector<PropertyResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const PropertyResult& r) { return r.passed; });
}

std::vector<PropertyResult> verify_losslessness(uint64_t seed, int trials) {
    std::vector<PropertyResult> results;
    RngState root(seed);

    struct PolicyCase {
        const char* name;
        PolicyConfig policy;
    };
    PolicyConfig base;
    base.kind = PolicyKind::static_length;
    base.max_draft_length = 4;
    PolicyConfig max_conf = base;
    max_conf.kind = PolicyKind::max_confidence;
    max_conf.initial_lambda = 0.5;
    max_conf.dynamic_lambda = true;
    PolicyConfig adaedl = base;
    adaedl.kind = PolicyKind::adaedl;
    adaedl.gamma = 0.2;
    adaedl.initial_lambda = 0.4;
    adaedl.dynamic_lambda = true;
    const PolicyCase cases[] = {{"base", base}, {"max-confidence", max_conf}, {"adaedl", adaedl}};

    const std::vector<int> context{1};
    for (int v : {2, 4, 8}) {
        const MarkovModel target =
            MarkovModel::random_target(v, 1, 0.6, root.split(static_cast<uint64_t>(v)).seed());
        const MarkovModel draft = MarkovModel::random_target(
            v, 1, 0.6, root.split(static_cast<uint64_t>(v) + 100).seed());
        const Distribution& truth = target.next_distribution(context);

        for (const PolicyCase& c : cases) {
            OutputProbe probe;
            probe.target = &target;
            probe.draft = &draft;
            probe.policy = c.policy;
            probe.seed = root.split(static_cast<uint64_t>(v) + 1000).seed();
            const Distribution empirical = empirical_output_distribution(probe, context, trials);
            const double distance = tvd(empirical, truth);
            std::ostringstream detail;
            detail << "V=" << v << " policy=" << c.name << " TVD=" << format_double(distance)
                   << " (limit 0.01, " << trials << " trials)";
            results.push_back(
                make_result("losslessness/V" + std::to_string(v) + "/" + c.name,
                            distance < 0.01, detail.str()));
        }
    }

    // Negative control: accepting every draft token must visibly distort the
    // output law on a divergent pair.
    {
        const int v = 8;
        const MarkovModel target = MarkovModel::random_target(v, 1, 0.6, root.split(7).seed());
        const MarkovModel draft = MarkovModel::random_target(v, 1, 0.6, root.split(8).seed());
        OutputProbe probe;
        probe.target = &target;
        probe.draft = &draft;
        probe.policy = base;
        probe.verifier = VerifierMode::accept_always;
        probe.seed = root.split(9).seed();
        const Distribution empirical = empirical_output_distribution(probe, context, trials);
        const double distance = tvd(empirical, target.next_distribution(context));
        std::ostringstream detail;
        detail << "accept-always TVD=" << format_double(distance) << " (must exceed 0.05)";
        results.push_back(make_result("losslessness/negative-control", distance > 0.05,
                                      detail.str()));
    }
    return results;
}

std::vector<PropertyResult> verify_pinsker(uint64_t seed, int random_pairs,
                                           int constructed_pairs) {
    std::vector<PropertyResult> results;
    RngState rng(seed);

    int beta_identity_failures = 0;
    int pinsker_failures = 0;
    int ce_failures = 0;
    double worst_beta_gap = 0.0;
    double worst_pinsker_slack = -std::numeric_limits<double>::infinity();
    const double concentrations[] = {0.1, 0.3, 1.0, 3.0};
    for (int i = 0; i < random_pairs; ++i) {
        const int v = 2 + static_cast<int>(rng.next_below(63));
        const double conc = concentrations[rng.next_below(4)];
        const Distribution p = random_distribution(v, conc, rng.next_u64());
        const Distribution q = random_distribution(v, conc, rng.next_u64());

        const double beta = acceptance_prob_analytic(p, q);
        const double beta_gap = std::abs(beta - (1.0 - tvd(p, q)));
        worst_beta_gap = std::max(worst_beta_gap, beta_gap);
        if (beta_gap > 1e-12) ++beta_identity_failures;

        const double divergence = kld(p, q);
        if (std::isfinite(divergence)) {
            const double slack = (1.0 - std::sqrt(0.5 * divergence)) - beta;
            worst_pinsker_slack = std::max(worst_pinsker_slack, slack);
            if (slack > 1e-12) ++pinsker_failures;
            if (cross_entropy(p, q) < entropy(p) - 1e-12) ++ce_failures;
        }
    }
    results.push_back(make_result(
        "pinsker/beta-identity", beta_identity_failures == 0,
        std::to_string(random_pairs) + " pairs, worst |sum-min - (1-TVD)| = " +
            format_double(worst_beta_gap)));
    results.push_back(make_result(
        "pinsker/inequality", pinsker_failures == 0,
        std::to_string(random_pairs) + " pairs, worst (1-sqrt(KLD/2)) - (1-TVD) = " +
            format_double(worst_pinsker_slack)));
    results.push_back(make_result("pinsker/ce-at-least-entropy", ce_failures == 0,
                                  std::to_string(ce_failures) + " violations"));

    // Constructed pairs in the approximation regime CE = (1 + 2*gamma) * H:
    // there the adaedl criterion equals the Pinsker acceptance bound.
    const double gamma = 0.2;
    int built = 0;
    int equality_failures = 0;
    int bound_failures = 0;
    double worst_equality_gap = 0.0;
    while (built < constructed_pairs) {
        const int v = 4 + static_cast<int>(rng.next_below(29));
        const Distribution d = random_distribution(v, 0.5, rng.next_u64());
        if (entropy(d) < 1e-3) continue;  // nearly one-hot rows solve trivially/poorly
        const EscortSolver solver(d);
        const auto q = solver.solve((1.0 + 2.0 * gamma) * solver.h);
        if (!q) continue;

        const double divergence = kld(d, *q);
        if (!std::isfinite(divergence)) continue;
        const double bound = 1.0 - std::sqrt(0.5 * divergence);
        const double criterion = criterion_adaedl(d, gamma);
        const double gap = std::abs(criterion - bound);
        worst_equality_gap = std::max(worst_equality_gap, gap);
        if (gap > 1e-9) ++equality_failures;
        if (criterion > acceptance_prob_analytic(d, *q) + 1e-9) ++bound_failures;
        ++built;
    }
    results.push_back(make_result(
        "pinsker/adaedl-criterion-equality", equality_failures == 0,
        std::to_string(built) + " constructed pairs, worst |criterion - pinsker bound| = " +
            format_double(worst_equality_gap)));
    results.push_back(make_result("pinsker/adaedl-criterion-is-lower-bound", bound_failures == 0,
                                  std::to_string(bound_failures) + " violations"));
    return results;
}

std::vector<PropertyResult> verify_controller(uint64_t seed, int random_updates) {
    std::vector<PropertyResult> results;

    // Hand trace 1: a round below the target acceptance rate raises lambda.
    {
        PolicyConfig policy;
        policy.kind = PolicyKind::adaedl;
        policy.max_draft_length = 7;
        policy.initial_lambda = 0.5;
        policy.alpha = 0.9;
        policy.epsilon = 0.01;
        policy.beta1 = 0.5;
        policy.beta2 = 0.9;
        ControllerState state = ControllerState::init(policy);
        state = update_lambda(state, 5, 3, 7);
        const bool ok = std::abs(state.ar_ema - 0.75) <= 1e-12 &&
                        std::abs(state.lambda - 0.501) <= 1e-12 && state.rounds_seen == 1;
        results.push_back(make_result("controller/trace-raise", ok,
                                      "lambda=" + format_double(state.lambda) +
                                          " ar_ema=" + format_double(state.ar_ema) +
                                          " (expected 0.501 / 0.75)"));
    }

    // Hand trace 2: at target rate and full acceptance, lambda holds.
    {
        PolicyConfig policy;
        policy.kind = PolicyKind::adaedl;
        policy.max_draft_length = 7;
        policy.initial_lambda = 0.5;
        ControllerState state = ControllerState::init(policy);
        state.ar_ema = 1.0;
        state = update_lambda(state, 7, 7, 7);
        const bool ok =
            std::abs(state.lambda - 0.5) <= 1e-12 && std::abs(state.ar_ema - 1.0) <= 1e-12;
        results.push_back(make_result("controller/trace-hold", ok,
                                      "lambda=" + format_double(state.lambda) +
                                          " ar_ema=" + format_double(state.ar_ema) +
                                          " (expected 0.5 / 1.0)"));
    }

    RngState rng(seed);
    int direction_failures = 0;
    int clamp_failures = 0;
    for (int i = 0; i < random_updates; ++i) {
        ControllerState state;
        state.lambda = rng.next_double();
        state.ar_ema = rng.next_double();
        state.alpha = rng.next_double();
        state.epsilon = 0.001 + 0.2 * rng.next_double();
        state.beta1 = rng.next_double();
        state.beta2 = 0.99 * rng.next_double();  // keep (1 - beta2) * epsilon > 0
        const int max_possible = 1 + static_cast<int>(rng.next_below(16));
        const int n_drafted = 1 + static_cast<int>(rng.next_below(max_possible));
        const int n_accepted = static_cast<int>(rng.next_below(n_drafted + 1));

        const ControllerState before = state;
        const ControllerState after = update_lambda(state, n_drafted, n_accepted, max_possible);

        if (after.lambda < 0.0 || after.lambda > 1.0) ++clamp_failures;

        const double blended =
            before.beta1 * before.ar_ema +
            (1.0 - before.beta1) * (static_cast<double>(n_accepted) / n_drafted);
        const double step = (1.0 - before.beta2) * before.epsilon;
        double expected;
        if (blended < before.alpha) {
            expected = std::min(1.0, before.lambda + step);
            if (after.lambda <= before.lambda && before.lambda < 1.0 - step) {
                ++direction_failures;
            }
        } else if (n_accepted != max_possible) {
            expected = std::max(0.0, before.lambda - step);
            if (after.lambda >= before.lambda && before.lambda > step) ++direction_failures;
        } else {
            expected = before.lambda;
        }
        if (std::abs(after.lambda - std::clamp(expected, 0.0, 1.0)) > 1e-12) {
            ++direction_failures;
        }
    }
    results.push_back(make_result("controller/direction", direction_failures == 0,
                                  std::to_string(random_updates) + " randomized updates, " +
                                      std::to_string(direction_failures) + " failures"));
    results.push_back(make_result("controller/clamp", clamp_failures == 0,
                                  std::to_string(clamp_failures) + " out-of-range thresholds"));

    // Fixed point: rounds at exactly the target rate with max-length
    // acceptance leave lambda untouched.
    {
        PolicyConfig policy;
        policy.kind = PolicyKind::adaedl;
        policy.alpha = 0.9;
        policy.initial_lambda = 0.37;
        ControllerState state = ControllerState::init(policy);
        bool ok = true;
        for (int i = 0; i < 500; ++i) {
            state = update_lambda(state, 10, 9, 9);
            if (std::abs(state.lambda - 0.37) > 1e-12) {
                ok = false;
                break;
            }
        }
        results.push_back(make_result("controller/fixed-point", ok,
                                      "500 neutral rounds, lambda=" +
                                          format_double(state.lambda) + " (expected 0.37)"));
    }

    // Clamp under adversarial chains.
    {
        RngState chain_rng(seed ^ 0xABCDEF12345ull);
        bool ok = true;
        for (int chain = 0; chain < 300 && ok; ++chain) {
            ControllerState state;
            state.lambda = chain_rng.next_double();
            state.alpha = chain_rng.next_double();
            state.epsilon = chain_rng.next_double();
            state.beta1 = chain_rng.next_double();
            state.beta2 = chain_rng.next_double();
            state.ar_ema = chain_rng.next_double();
            for (int step = 0; step < 200; ++step) {
                const int n_drafted = 1 + static_cast<int>(chain_rng.next_below(16));
                const int n_accepted = static_cast<int>(chain_rng.next_below(n_drafted + 1));
                state = update_lambda(state, n_drafted, n_accepted, 16);
                if (state.lambda < 0.0 || state.lambda > 1.0) {
                    ok = false;
                    break;
                }
            }
        }
        results.push_back(
            make_result("controller/clamp-chains", ok, "300 chains of 200 adversarial updates"));
    }
    return results;
}

std::vector<PropertyResult> verify_clock(uint64_t seed) {
    std::vector<PropertyResult> results;
    RngState root(seed);

    CostModel cost;
    cost.t_draft_token = 0.004;
    cost.t_verify_round = 0.04;

    // Autoregressive: exactly n * t_target_step, so 100 tokens at 0.04 s/step
    // decode at 25 TPS.
    {
        const MarkovModel target = MarkovModel::random_target(8, 1, 0.7, root.split(1).seed());
        RngState rng = root.split(2);
        const GenerationResult result =
            generate_autoregressive(target, std::vector<int>{0}, 100, {}, rng, cost);
        const bool ok = result.report.total_simulated_seconds == 100 * cost.t_verify_round &&
                        std::abs(result.report.tps - 25.0) < 1e-9;
        results.push_back(make_result("clock/autoregressive-exact", ok,
                                      "tps=" + format_double(result.report.tps) +
                                          " (expected 25)"));
    }

    // Identical draft and target: every round accepts all 7 drafts and emits
    // 8 tokens in 7 * t_draft + t_verify simulated seconds.
    {
        const MarkovModel target = MarkovModel::random_target(8, 1, 0.7, root.split(3).seed());
        PolicyConfig policy;
        policy.kind = PolicyKind::static_length;
        policy.max_draft_length = 7;
        RngState rng = root.split(4);
        SpeculativeOptions options;
        options.record_rounds = true;
        const GenerationResult result = generate_speculative(
            target, target, std::vector<int>{0}, 96, policy, {}, rng, cost, options);
        const RunReport& rep = result.report;
        const double expected_tps = 96.0 / (12.0 * (7 * 0.004 + 0.04));
        bool ok = rep.total_rounds == 12 && rep.accepted_count_histogram[7] == 12 &&
                  std::abs(rep.tps - expected_tps) < 1e-9;

        double in_order_sum = 0.0;
        for (const DraftRoundRecord& round : rep.rounds) {
            const int checks = 0;  // static policy never consults the criterion
            const double recomputed = static_cast<double>(round.n_drafted) * cost.t_draft_token +
                                      cost.t_verify_round +
                                      static_cast<double>(checks) * cost.t_overhead_stop_check;
            if (recomputed != round.simulated_time) ok = false;
            in_order_sum += round.simulated_time;
        }
        if (in_order_sum != rep.total_simulated_seconds) ok = false;
        results.push_back(make_result("clock/all-accept", ok,
                                      "tps=" + format_double(rep.tps) + " (expected " +
                                          format_double(expected_tps) + "), additivity exact"));
    }

    // Disjoint-support draft: every draft token is rejected, one token per
    // round, and TPS falls below the autoregressive 25.
    {
        std::vector<Distribution> target_rows(2, Distribution::one_hot(2, 0));
        std::vector<Distribution> draft_rows(2, Distribution::one_hot(2, 1));
        const MarkovModel target(2, 1, 0, target_rows);
        const MarkovModel draft(2, 1, 0, draft_rows);
        PolicyConfig policy;
        policy.kind = PolicyKind::static_length;
        policy.max_draft_length = 7;
        RngState rng = root.split(5);
        const GenerationResult result = generate_speculative(
            target, draft, std::vector<int>{0}, 50, policy, {}, rng, cost, {});
        const RunReport& rep = result.report;
        const double expected_tps = 1.0 / (7 * 0.004 + 0.04);
        const bool ok = rep.total_rounds == 50 && rep.accepted_count_histogram[0] == 50 &&
                        rep.acceptance_rate == 0.0 &&
                        std::abs(rep.tps - expected_tps) < 1e-9 && rep.tps < 25.0;
        results.push_back(make_result("clock/all-reject", ok,
                                      "tps=" + format_double(rep.tps) + " (expected " +
                                          format_double(expected_tps) + ")"));
    }

    // Adaptive policy with stop-check overhead: totals recompute bitwise
    // from the per-round formula, with check counts derived from the stop
    // reason.
    {
        const MarkovModel target = MarkovModel::random_target(16, 1, 0.4, root.split(6).seed());
        DerivedDraftSpec spec;
        spec.mode = DerivedDraftSpec::Mode::dirichlet_resample;
        spec.strength = 0.5;
        spec.seed = root.split(7).seed();
        const MarkovModel draft = MarkovModel::derive_draft(target, spec);
        PolicyConfig policy;
        policy.kind = PolicyKind::adaedl;
        policy.max_draft_length = 6;
        policy.dynamic_lambda = true;
        CostModel overhead_cost = cost;
        overhead_cost.t_overhead_stop_check = 0.0005;
        RngState rng = root.split(8);
        SpeculativeOptions options;
        options.record_rounds = true;
        const GenerationResult result = generate_speculative(
            target, draft, std::vector<int>{1, 2}, 400, policy, {}, rng, overhead_cost, options);
        const RunReport& rep = result.report;

        bool ok = true;
        double in_order_sum = 0.0;
        uint64_t emitted = 0;
        for (const DraftRoundRecord& round : rep.rounds) {
            const int checks = round.stop_reason == StopReason::criterion_below_threshold
                                   ? round.n_drafted
                                   : round.n_drafted - 1;
            const double recomputed =
                static_cast<double>(round.n_drafted) * overhead_cost.t_draft_token +
                overhead_cost.t_verify_round +
                static_cast<double>(checks) * overhead_cost.t_overhead_stop_check;
            if (recomputed != round.simulated_time) ok = false;
            in_order_sum += round.simulated_time;
            emitted += static_cast<uint64_t>(round.n_accepted) + 1;
        }
        if (in_order_sum != rep.total_simulated_seconds) ok = false;
        if (emitted < rep.total_tokens_emitted) ok = false;
        uint64_t hist_total = 0;
        for (uint64_t c : rep.accepted_count_histogram) hist_total += c;
        if (hist_total != rep.total_rounds) ok = false;
        results.push_back(make_result("clock/additivity", ok,
                                      std::to_string(rep.total_rounds) +
                                          " rounds recompute bitwise, including stop-check "
                                          "overhead"));
    }
    return results;
}

}  // namespace specsim
