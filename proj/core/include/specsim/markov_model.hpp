#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specsim/distribution.hpp"

namespace specsim {

// Raised by MarkovModel::load on malformed files; carries the 1-based line.
class ModelFileError : public std::runtime_error {
public:
    ModelFileError(int line, const std::string& what)
        : std::runtime_error("model file, line " + std::to_string(line) + ": " + what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Recipe for deriving a draft model from a base model. strength 0 leaves the
// rows untouched, strength 1 is the strongest perturbation of the mode.
struct DerivedDraftSpec {
    enum class Mode { temperature_perturb, mixture_with_uniform, dirichlet_resample };

    Mode mode = Mode::mixture_with_uniform;
    double strength = 0.0;  // in [0, 1]
    uint64_t seed = 0;      // consumed by dirichlet_resample only

    void validate() const;
    bool operator==(const DerivedDraftSpec&) const = default;
};

std::string to_string(DerivedDraftSpec::Mode mode);
DerivedDraftSpec::Mode draft_mode_from_string(const std::string& s);

// Order-k Markov model over a vocabulary of V tokens: one conditional
// distribution per context of k token ids, dense over all V^k contexts.
// Immutable after construction; generation randomness lives with the caller.
class MarkovModel {
public:
    // Dense tables are capped at 2^20 rows.
    static constexpr size_t kMaxRows = size_t{1} << 20;

    MarkovModel(int vocab_size, int order, uint64_t seed, std::vector<Distribution> rows);

    // Rows drawn from a symmetric Dirichlet(concentration); deterministic
    // in seed.
    static MarkovModel random_target(int vocab_size, int order, double concentration,
                                     uint64_t seed);

    static MarkovModel derive_draft(const MarkovModel& base, const DerivedDraftSpec& spec);

    // Conditional distribution after `context`; only the last k tokens are
    // consulted, and contexts shorter than k are left-padded with token 0.
    const Distribution& next_distribution(std::span<const int> context) const;

    const Distribution& row(size_t index) const { return rows_[index]; }
    size_t row_count() const { return rows_.size(); }
    int vocab_size() const { return vocab_size_; }
    int order() const { return order_; }
    uint64_t seed() const { return seed_; }

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static MarkovModel load(std::istream& in);
    static MarkovModel load_file(const std::string& path);

    bool operator==(const MarkovModel&) const = default;

private:
    int vocab_size_;
    int order_;
    uint64_t seed_;
    std::vector<Distribution> rows_;
};

}  // namespace specsim
