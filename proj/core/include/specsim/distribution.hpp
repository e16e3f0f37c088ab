#pragma once

#include <optional>
#include <vector>

namespace specsim {

inline constexpr double kNormalizationTolerance = 1e-9;

// Categorical distribution over a token vocabulary [0, V), V >= 2.
// Immutable after construction and safe to share across threads.
class Distribution {
public:
    // Entries must lie in [0, 1] and sum to 1 within kNormalizationTolerance;
    // the stored vector is renormalized to remove residual drift.
    explicit Distribution(std::vector<double> probs);

    static Distribution uniform(int vocab_size);
    static Distribution one_hot(int vocab_size, int index);

    // Normalizes arbitrary non-negative finite weights (sum must be > 0).
    static Distribution from_weights(std::vector<double> weights);

    // Accepts already-normalized entries verbatim (validated, not
    // renormalized) so values round-trip bit-exactly through model files.
    static Distribution from_normalized(std::vector<double> probs);

    int size() const { return static_cast<int>(probs_.size()); }
    double operator[](int i) const { return probs_[static_cast<size_t>(i)]; }
    const std::vector<double>& probs() const { return probs_; }

    // Index of the largest entry; lowest index wins ties.
    int argmax() const;

    bool operator==(const Distribution&) const = default;

private:
    struct Verbatim {};
    Distribution(Verbatim, std::vector<double> probs) : probs_(std::move(probs)) {}

    std::vector<double> probs_;
};

// Sampling adjustment: temperature is applied as p^(1/T) followed by
// renormalization, then at most one of top-k / nucleus truncation.
struct AdjustmentSpec {
    double temperature = 1.0;
    std::optional<int> top_k;
    std::optional<double> nucleus_p;

    bool is_identity() const { return temperature == 1.0 && !top_k && !nucleus_p; }
    void validate(int vocab_size) const;  // throws std::invalid_argument

    bool operator==(const AdjustmentSpec&) const = default;
};

Distribution adjust(const Distribution& d, const AdjustmentSpec& spec);

// Shannon entropy in nats, with 0*ln(0) := 0. Result lies in [0, ln V].
double entropy(const Distribution& d);

// Total variation distance, 1/2 * sum |p_i - q_i|.
double tvd(const Distribution& p, const Distribution& q);

// KL divergence in nats. Returns +infinity when q lacks support where p
// has mass.
double kld(const Distribution& p, const Distribution& q);

// Cross entropy in nats; equals kld(p, q) + entropy(p).
double cross_entropy(const Distribution& p, const Distribution& q);

// Normalized max(0, target - draft). When the residual is identically zero
// (target == draft entrywise) the target itself is returned and
// *used_fallback, if given, is set.
Distribution residual(const Distribution& target, const Distribution& draft,
                      bool* used_fallback = nullptr);

// Per-token acceptance probability of rejection sampling, sum min(d_i, t_i).
// Equals 1 - tvd(draft, target).
double acceptance_prob_analytic(const Distribution& draft, const Distribution& target);

}  // namespace specsim
