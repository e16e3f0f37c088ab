#include "specsim/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace specsim {

namespace {

void check_same_size(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("vocab size mismatch: " + std::to_string(p.size()) +
                                    " vs " + std::to_string(q.size()));
    }
}

}  // namespace

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
        throw std::invalid_argument("distribution needs a vocab of at least 2 entries");
    }
    double sum = 0.0;
    for (size_t i = 0; i < probs_.size(); ++i) {
        const double p = probs_[i];
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw std::invalid_argument("probability at index " + std::to_string(i) +
                                        " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
        throw std::invalid_argument("probabilities sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
    }
    for (double& p : probs_) p /= sum;
}

Distribution Distribution::uniform(int vocab_size) {
    if (vocab_size < 2) throw std::invalid_argument("vocab size must be >= 2");
    return Distribution(Verbatim{},
                        std::vector<double>(static_cast<size_t>(vocab_size), 1.0 / vocab_size));
}

Distribution Distribution::one_hot(int vocab_size, int index) {
    if (vocab_size < 2) throw std::invalid_argument("vocab size must be >= 2");
    if (index < 0 || index >= vocab_size) throw std::invalid_argument("one-hot index out of range");
    std::vector<double> p(static_cast<size_t>(vocab_size), 0.0);
    p[static_cast<size_t>(index)] = 1.0;
    return Distribution(Verbatim{}, std::move(p));
}

Distribution Distribution::from_weights(std::vector<double> weights) {
    if (weights.size() < 2) {
        throw std::invalid_argument("distribution needs a vocab of at least 2 entries");
    }
    double sum = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        const double w = weights[i];
        if (!std::isfinite(w) || w < 0.0) {
            throw std::invalid_argument("weight at index " + std::to_string(i) +
                                        " is negative or non-finite");
        }
        sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("weights sum to zero");
    for (double& w : weights) w /= sum;
    return Distribution(Verbatim{}, std::move(weights));
}

Distribution Distribution::from_normalized(std::vector<double> probs) {
    if (probs.size() < 2) {
        throw std::invalid_argument("distribution needs a vocab of at least 2 entries");
    }
    double sum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw std::invalid_argument("probability at index " + std::to_string(i) +
                                        " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
        throw std::invalid_argument("probabilities sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
    }
    return Distribution(Verbatim{}, std::move(probs));
}

int Distribution::argmax() const {
    return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

void AdjustmentSpec::validate(int vocab_size) const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw std::invalid_argument("temperature must be a positive finite real");
    }
    if (top_k && nucleus_p) {
        throw std::invalid_argument("at most one of top_k / nucleus_p may be set");
    }
    if (top_k && (*top_k < 1 || *top_k > vocab_size)) {
        throw std::invalid_argument("top_k must lie in [1, vocab size]");
    }
    if (nucleus_p && (!(*nucleus_p > 0.0) || *nucleus_p > 1.0)) {
        throw std::invalid_argument("nucleus_p must lie in (0, 1]");
    }
}

Distribution adjust(const Distribution& d, const AdjustmentSpec& spec) {
    spec.validate(d.size());
    if (spec.is_identity()) return d;

    std::vector<double> w = d.probs();
    if (spec.temperature != 1.0) {
        // Work relative to the max entry so extreme temperatures cannot
        // underflow every weight to zero.
        const double inv_t = 1.0 / spec.temperature;
        const double log_max = std::log(w[static_cast<size_t>(d.argmax())]);
        for (double& p : w) {
            p = p > 0.0 ? std::exp((std::log(p) - log_max) * inv_t) : 0.0;
        }
    }

    if (spec.top_k || spec.nucleus_p) {
        // Descending by weight, ties broken toward the lowest index.
        std::vector<int> order(w.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double wa = w[static_cast<size_t>(a)];
            const double wb = w[static_cast<size_t>(b)];
            return wa != wb ? wa > wb : a < b;
        });

        size_t keep;
        if (spec.top_k) {
            keep = static_cast<size_t>(*spec.top_k);
        } else {
            const double total = std::accumulate(w.begin(), w.end(), 0.0);
            const double needed = *spec.nucleus_p * total;
            double cum = 0.0;
            keep = w.size();
            for (size_t i = 0; i < order.size(); ++i) {
                cum += w[static_cast<size_t>(order[i])];
                if (cum >= needed) {
                    keep = i + 1;
                    break;
                }
            }
        }
        for (size_t i = keep; i < order.size(); ++i) {
            w[static_cast<size_t>(order[i])] = 0.0;
        }
    }

    return Distribution::from_weights(std::move(w));
}

double entropy(const Distribution& d) {
    double h = 0.0;
    for (double p : d.probs()) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h < 0.0 ? 0.0 : h;
}

double tvd(const Distribution& p, const Distribution& q) {
    check_same_size(p, q);
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

double kld(const Distribution& p, const Distribution& q) {
    check_same_size(p, q);
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
            acc += p[i] * std::log(p[i] / q[i]);
        }
    }
    return acc < 0.0 ? 0.0 : acc;  // guard against rounding for p ~= q
}

double cross_entropy(const Distribution& p, const Distribution& q) {
    check_same_size(p, q);
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
            acc -= p[i] * std::log(q[i]);
        }
    }
    return acc;
}

Distribution residual(const Distribution& target, const Distribution& draft,
                      bool* used_fallback) {
    check_same_size(target, draft);
    std::vector<double> w(static_cast<size_t>(target.size()));
    double sum = 0.0;
    for (int i = 0; i < target.size(); ++i) {
        const double diff = target[i] - draft[i];
        w[static_cast<size_t>(i)] = diff > 0.0 ? diff : 0.0;
        sum += w[static_cast<size_t>(i)];
    }
    if (sum <= 0.0) {
        if (used_fallback) *used_fallback = true;
        return target;
    }
    if (used_fallback) *used_fallback = false;
    return Distribution::from_weights(std::move(w));
}

double acceptance_prob_analytic(const Distribution& draft, const Distribution& target) {
    check_same_size(draft, target);
    double acc = 0.0;
    for (int i = 0; i < draft.size(); ++i) acc += std::min(draft[i], target[i]);
    return acc;
}

}  // namespace specsim
