#include "specsim/stopping.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace specsim {

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::static_length: return "static";
        case PolicyKind::max_confidence: return "max-confidence";
        case PolicyKind::adaedl: return "adaedl";
    }
    throw std::logic_error("unreachable policy kind");
}

std::string to_string(EntropySource source) {
    return source == EntropySource::raw ? "raw" : "adjusted";
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::criterion_below_threshold: return "criterion-below-threshold";
        case StopReason::max_length_reached: return "max-length-reached";
        case StopReason::continue_drafting: return "continue";
    }
    throw std::logic_error("unreachable stop reason");
}

StopReason stop_reason_from_string(const std::string& s) {
    if (s == "criterion-below-threshold") return StopReason::criterion_below_threshold;
    if (s == "max-length-reached") return StopReason::max_length_reached;
    if (s == "continue") return StopReason::continue_drafting;
    throw std::invalid_argument("unknown stop reason '" + s + "'");
}

void PolicyConfig::validate() const {
    if (max_draft_length < 1) throw std::invalid_argument("max_draft_length must be >= 1");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
    if (initial_lambda < 0.0 || initial_lambda > 1.0) {
        throw std::invalid_argument("initial_lambda must lie in [0, 1]");
    }
    if (kind == PolicyKind::static_length && dynamic_lambda) {
        throw std::invalid_argument("a static policy has no threshold to update; "
                                    "dynamic_lambda must be false");
    }
    for (auto [value, name] : {std::pair{alpha, "alpha"}, {epsilon, "epsilon"},
                               {beta1, "beta1"}, {beta2, "beta2"}}) {
        if (value < 0.0 || value > 1.0) {
            throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
        }
    }
}

std::vector<std::string> PolicyConfig::warnings() const {
    std::vector<std::string> out;
    if (kind == PolicyKind::adaedl && gamma > 1.0) {
        out.push_back("gamma = " + std::to_string(gamma) +
                      " is outside the recommended range (0, 1]");
    }
    return out;
}

ControllerState ControllerState::init(const PolicyConfig& policy) {
    ControllerState state;
    state.lambda = policy.initial_lambda;
    state.ar_ema = policy.alpha;
    state.alpha = policy.alpha;
    state.epsilon = policy.epsilon;
    state.beta1 = policy.beta1;
    state.beta2 = policy.beta2;
    state.rounds_seen = 0;
    return state;
}

double criterion_adaedl(const Distribution& d, double gamma) {
    return 1.0 - std::sqrt(gamma * entropy(d));
}

double criterion_max_confidence(const Distribution& d) {
    return d[d.argmax()];
}

double policy_criterion(const PolicyConfig& policy, const Distribution& d) {
    return policy.kind == PolicyKind::max_confidence ? criterion_max_confidence(d)
                                                     : criterion_adaedl(d, policy.gamma);
}

StopDecision should_stop(const PolicyConfig& policy, const ControllerState& state,
                         const Distribution& next_dist, int tokens_drafted) {
    StopDecision decision;
    decision.criterion_value = policy_criterion(policy, next_dist);

    if (tokens_drafted >= policy.max_draft_length) {
        decision.stop = true;
        decision.reason = StopReason::max_length_reached;
        return decision;
    }
    // The first token of a round is drafted unconditionally.
    if (tokens_drafted == 0 || policy.kind == PolicyKind::static_length) {
        return decision;
    }
    if (decision.criterion_value < state.lambda) {
        decision.stop = true;
        decision.reason = StopReason::criterion_below_threshold;
    }
    return decision;
}

ControllerState update_lambda(ControllerState state, int n_drafted, int n_accepted,
                              int max_possible) {
    assert(n_drafted >= 1);
    assert(n_accepted >= 0 && n_accepted <= n_drafted);

    const double round_ar = static_cast<double>(n_accepted) / static_cast<double>(n_drafted);
    state.ar_ema = state.beta1 * state.ar_ema + (1.0 - state.beta1) * round_ar;

    double proposed = state.lambda;
    if (state.ar_ema < state.alpha) {
        proposed = state.lambda + state.epsilon;       // below target: stop drafting sooner
    } else if (n_accepted != max_possible) {
        proposed = state.lambda - state.epsilon;       // room to draft more
    }
    state.lambda = state.beta2 * state.lambda + (1.0 - state.beta2) * proposed;
    state.lambda = std::clamp(state.lambda, 0.0, 1.0);
    state.rounds_seen += 1;
    return state;
}

}  // namespace specsim
