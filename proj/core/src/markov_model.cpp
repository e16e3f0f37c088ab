#include "specsim/markov_model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "specsim/rng.hpp"

namespace specsim {

namespace {

double rng_normal(RngState& rng) {
    // Box-Muller; two uniforms per draw, no cached half.
    double u1;
    do {
        u1 = rng.next_double();
    } while (u1 <= 0.0);
    const double u2 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Marsaglia-Tsang. Hand-rolled rather than std::gamma_distribution so the
// draw sequence is pinned by our counter-based stream, not by whichever
// algorithm the standard library ships.
double rng_gamma(RngState& rng, double alpha) {
    if (alpha < 1.0) {
        const double u = rng.next_double();
        return rng_gamma(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = rng_normal(rng);
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.next_double();
        if (u == 0.0) continue;
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

std::vector<double> dirichlet_row(RngState& rng, std::span<const double> alpha) {
    std::vector<double> w(alpha.size());
    for (;;) {
        double sum = 0.0;
        for (size_t i = 0; i < alpha.size(); ++i) {
            w[i] = rng_gamma(rng, alpha[i]);
            sum += w[i];
        }
        if (sum > 0.0) return w;
    }
}

size_t checked_row_count(int vocab_size, int order) {
    size_t n = 1;
    for (int i = 0; i < order; ++i) {
        if (n > MarkovModel::kMaxRows / static_cast<size_t>(vocab_size)) {
            throw std::length_error("model table of " + std::to_string(vocab_size) + "^" +
                                    std::to_string(order) + " rows exceeds the cap of " +
                                    std::to_string(MarkovModel::kMaxRows));
        }
        n *= static_cast<size_t>(vocab_size);
    }
    return n;
}

constexpr int kModelFileVersion = 1;
constexpr const char* kModelMagic = "specsim-model";

// dirichlet_resample schedule: concentration scale decays from 1e4 (barely
// perturbed) to 1 (fully resampled) as strength goes 0 -> 1, with a small
// floor keeping every token in support.
double resample_concentration(double strength) {
    return std::pow(10.0, 4.0 * (1.0 - strength));
}
constexpr double kResampleFloor = 1e-3;

}  // namespace

void DerivedDraftSpec::validate() const {
    if (!(strength >= 0.0) || strength > 1.0) {
        throw std::invalid_argument("draft strength must lie in [0, 1]");
    }
}

std::string to_string(DerivedDraftSpec::Mode mode) {
    switch (mode) {
        case DerivedDraftSpec::Mode::temperature_perturb: return "temperature-perturb";
        case DerivedDraftSpec::Mode::mixture_with_uniform: return "mixture-with-uniform";
        case DerivedDraftSpec::Mode::dirichlet_resample: return "dirichlet-resample";
    }
    throw std::logic_error("unreachable draft mode");
}

DerivedDraftSpec::Mode draft_mode_from_string(const std::string& s) {
    if (s == "temperature-perturb") return DerivedDraftSpec::Mode::temperature_perturb;
    if (s == "mixture-with-uniform") return DerivedDraftSpec::Mode::mixture_with_uniform;
    if (s == "dirichlet-resample") return DerivedDraftSpec::Mode::dirichlet_resample;
    throw std::invalid_argument("unknown draft mode '" + s + "'");
}

MarkovModel::MarkovModel(int vocab_size, int order, uint64_t seed, std::vector<Distribution> rows)
    : vocab_size_(vocab_size), order_(order), seed_(seed), rows_(std::move(rows)) {
    if (vocab_size_ < 2) throw std::invalid_argument("vocab size must be >= 2");
    if (order_ < 0) throw std::invalid_argument("order must be >= 0");
    const size_t expected = checked_row_count(vocab_size_, order_);
    if (rows_.size() != expected) {
        throw std::invalid_argument("expected " + std::to_string(expected) + " rows, got " +
                                    std::to_string(rows_.size()));
    }
    for (const Distribution& row : rows_) {
        if (row.size() != vocab_size_) {
            throw std::invalid_argument("row width does not match vocab size");
        }
    }
}

MarkovModel MarkovModel::random_target(int vocab_size, int order, double concentration,
                                       uint64_t seed) {
    if (vocab_size < 2) throw std::invalid_argument("vocab size must be >= 2");
    if (order < 0) throw std::invalid_argument("order must be >= 0");
    if (!(concentration > 0.0)) throw std::invalid_argument("concentration must be > 0");
    const size_t n_rows = checked_row_count(vocab_size, order);

    const std::vector<double> alpha(static_cast<size_t>(vocab_size), concentration);
    std::vector<Distribution> rows;
    rows.reserve(n_rows);
    RngState root(seed);
    for (size_t r = 0; r < n_rows; ++r) {
        RngState row_rng = root.split(r);
        rows.push_back(Distribution::from_weights(dirichlet_row(row_rng, alpha)));
    }
    return MarkovModel(vocab_size, order, seed, std::move(rows));
}

MarkovModel MarkovModel::derive_draft(const MarkovModel& base, const DerivedDraftSpec& spec) {
    spec.validate();
    const double s = spec.strength;
    if (s == 0.0) {
        return MarkovModel(base.vocab_size_, base.order_, spec.seed, base.rows_);
    }

    const int v = base.vocab_size_;
    std::vector<Distribution> rows;
    rows.reserve(base.rows_.size());

    switch (spec.mode) {
        case DerivedDraftSpec::Mode::temperature_perturb: {
            // Exponent 1 - s flattens each row toward uniform-over-support.
            const double a = 1.0 - s;
            for (const Distribution& row : base.rows_) {
                std::vector<double> w(static_cast<size_t>(v));
                for (int i = 0; i < v; ++i) {
                    w[static_cast<size_t>(i)] = row[i] > 0.0 ? std::exp(a * std::log(row[i])) : 0.0;
                }
                rows.push_back(Distribution::from_weights(std::move(w)));
            }
            break;
        }
        case DerivedDraftSpec::Mode::mixture_with_uniform: {
            const double u = s / v;
            for (const Distribution& row : base.rows_) {
                std::vector<double> w(static_cast<size_t>(v));
                for (int i = 0; i < v; ++i) {
                    w[static_cast<size_t>(i)] = (1.0 - s) * row[i] + u;
                }
                rows.push_back(Distribution::from_weights(std::move(w)));
            }
            break;
        }
        case DerivedDraftSpec::Mode::dirichlet_resample: {
            const double scale = resample_concentration(s);
            RngState root(spec.seed);
            std::vector<double> alpha(static_cast<size_t>(v));
            for (size_t r = 0; r < base.rows_.size(); ++r) {
                const Distribution& row = base.rows_[r];
                for (int i = 0; i < v; ++i) {
                    alpha[static_cast<size_t>(i)] = scale * row[i] + kResampleFloor;
                }
                RngState row_rng = root.split(r);
                rows.push_back(Distribution::from_weights(dirichlet_row(row_rng, alpha)));
            }
            break;
        }
    }
    return MarkovModel(base.vocab_size_, base.order_, spec.seed, std::move(rows));
}

const Distribution& MarkovModel::next_distribution(std::span<const int> context) const {
    size_t index = 0;
    const int len = static_cast<int>(context.size());
    for (int i = 0; i < order_; ++i) {
        const int pos = len - order_ + i;
        const int tok = pos >= 0 ? context[static_cast<size_t>(pos)] : 0;
        if (tok < 0 || tok >= vocab_size_) {
            throw std::out_of_range("context token " + std::to_string(tok) +
                                    " outside [0, " + std::to_string(vocab_size_) + ")");
        }
        index = index * static_cast<size_t>(vocab_size_) + static_cast<size_t>(tok);
    }
    return rows_[index];
}

void MarkovModel::save(std::ostream& out) const {
    out << kModelMagic << ' ' << kModelFileVersion << '\n';
    out << vocab_size_ << ' ' << order_ << ' ' << seed_ << '\n';
    char buf[64];
    for (const Distribution& row : rows_) {
        for (int i = 0; i < vocab_size_; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            if (i) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing model stream");
}

void MarkovModel::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    save(out);
}

MarkovModel MarkovModel::load(std::istream& in) {
    int line_no = 0;
    std::string line;

    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            return true;
        }
        return false;
    };

    if (!next_line()) throw ModelFileError(1, "empty file");
    {
        std::istringstream header(line);
        std::string magic;
        int version = -1;
        header >> magic >> version;
        if (magic != kModelMagic) {
            throw ModelFileError(line_no, "not a specsim model file (bad magic '" + magic + "')");
        }
        if (header.fail()) throw ModelFileError(line_no, "missing version number");
        if (version != kModelFileVersion) {
            throw ModelFileError(line_no, "unsupported model file version " +
                                              std::to_string(version) + " (expected " +
                                              std::to_string(kModelFileVersion) + ")");
        }
    }

    if (!next_line()) throw ModelFileError(line_no + 1, "missing header line 'V k seed'");
    int vocab_size = 0;
    int order = -1;
    uint64_t seed = 0;
    {
        std::istringstream header(line);
        header >> vocab_size >> order >> seed;
        if (header.fail()) throw ModelFileError(line_no, "expected 'V k seed'");
        if (vocab_size < 2) throw ModelFileError(line_no, "vocab size must be >= 2");
        if (order < 0) throw ModelFileError(line_no, "order must be >= 0");
    }

    size_t n_rows = 0;
    try {
        n_rows = checked_row_count(vocab_size, order);
    } catch (const std::length_error& e) {
        throw ModelFileError(line_no, e.what());
    }

    std::vector<Distribution> rows;
    rows.reserve(n_rows);
    for (size_t r = 0; r < n_rows; ++r) {
        if (!next_line()) {
            throw ModelFileError(line_no + 1, "truncated file: expected " +
                                                  std::to_string(n_rows) + " rows, found " +
                                                  std::to_string(r));
        }
        std::vector<double> probs(static_cast<size_t>(vocab_size));
        const char* cursor = line.c_str();
        for (int i = 0; i < vocab_size; ++i) {
            char* end = nullptr;
            const double value = std::strtod(cursor, &end);
            if (end == cursor) {
                throw ModelFileError(line_no, "row " + std::to_string(r) + ": expected " +
                                                  std::to_string(vocab_size) +
                                                  " probabilities, found " + std::to_string(i) +
                                                  " (offset " +
                                                  std::to_string(cursor - line.c_str()) + ")");
            }
            probs[static_cast<size_t>(i)] = value;
            cursor = end;
        }
        while (*cursor == ' ' || *cursor == '\t' || *cursor == '\r') ++cursor;
        if (*cursor != '\0') {
            throw ModelFileError(line_no, "row " + std::to_string(r) + ": trailing data at offset " +
                                              std::to_string(cursor - line.c_str()));
        }
        try {
            rows.push_back(Distribution::from_normalized(std::move(probs)));
        } catch (const std::invalid_argument& e) {
            throw ModelFileError(line_no, "row " + std::to_string(r) + ": " + e.what());
        }
    }

    while (next_line()) {
        for (char c : line) {
            if (c != ' ' && c != '\t' && c != '\r') {
                throw ModelFileError(line_no, "trailing data after last row");
            }
        }
    }

    return MarkovModel(vocab_size, order, seed, std::move(rows));
}

MarkovModel MarkovModel::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
    return load(in);
}

}  // namespace specsim
