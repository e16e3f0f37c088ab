#include "specsim/sampling.hpp"

#include <cassert>
#include <stdexcept>
#include <string>

namespace specsim {

int sample(const Distribution& d, RngState& rng) {
    const double u = rng.next_double();
    double cum = 0.0;
    int last_positive = -1;
    for (int i = 0; i < d.size(); ++i) {
        const double p = d[i];
        if (p <= 0.0) continue;
        cum += p;
        last_positive = i;
        if (u < cum) return i;
    }
    // u fell into the rounding sliver past the accumulated mass.
    assert(last_positive >= 0);
    return last_positive;
}

VerifyOutcome verify_round(std::span<const int> draft_tokens,
                           std::span<const Distribution> draft_dists,
                           std::span<const Distribution> target_dists,
                           RngState& rng,
                           VerifierMode mode) {
    const size_t n = draft_tokens.size();
    if (draft_dists.size() != n) {
        throw std::invalid_argument("verify_round: " + std::to_string(n) + " draft tokens but " +
                                    std::to_string(draft_dists.size()) + " draft distributions");
    }
    if (target_dists.size() != n + 1) {
        throw std::invalid_argument("verify_round: expected " + std::to_string(n + 1) +
                                    " target distributions, got " +
                                    std::to_string(target_dists.size()));
    }

    VerifyOutcome out;
    out.emitted_tokens.reserve(n + 1);

    for (size_t i = 0; i < n; ++i) {
        const int tok = draft_tokens[i];
        const double p_draft = draft_dists[i][tok];
        assert(p_draft > 0.0 && "drafted token must have draft probability > 0");
        const double p_target = target_dists[i][tok];

        bool accepted = true;
        if (mode == VerifierMode::rejection) {
            const double ratio = p_target / p_draft;
            accepted = rng.next_double() < (ratio < 1.0 ? ratio : 1.0);
        }
        if (!accepted) {
            out.rejection_index = static_cast<int>(i);
            bool fallback = false;
            const Distribution repl = residual(target_dists[i], draft_dists[i], &fallback);
            out.residual_fallback = fallback;
            out.emitted_tokens.push_back(sample(repl, rng));
            out.accepted_count = static_cast<int>(i);
            return out;
        }
        out.emitted_tokens.push_back(tok);
    }

    out.accepted_count = static_cast<int>(n);
    out.emitted_tokens.push_back(sample(target_dists[n], rng));
    out.bonus_token_used = true;
    return out;
}

}  // namespace specsim
