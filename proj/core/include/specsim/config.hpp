#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specsim/engine.hpp"
#include "specsim/markov_model.hpp"
#include "specsim/stopping.hpp"

namespace specsim {

// Carries the JSON-pointer-style path of the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error("config error at " + path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

enum class Method { autoregressive, base_spd, max_confidence_spd, adaedl };

std::string to_string(Method method);
Method method_from_string(const std::string& s);

struct GeneratorSpec {
    int vocab_size = 32;
    int order = 1;
    double concentration = 1.0;
    uint64_t seed = 0;

    bool operator==(const GeneratorSpec&) const = default;
};

// Exactly one of file / generate.
struct TargetSpec {
    std::optional<std::string> file;
    std::optional<GeneratorSpec> generate;

    bool operator==(const TargetSpec&) const = default;
};

// Exactly one of file / derive (derive perturbs the target model).
struct DraftSpec {
    std::optional<std::string> file;
    std::optional<DerivedDraftSpec> derive;

    bool empty() const { return !file && !derive; }
    bool operator==(const DraftSpec&) const = default;
};

// Synthetic prompt corpus: `count` seeded uniform-random token sequences of
// `length` tokens. The corpus seed is independent of the run seed.
struct PromptSpec {
    int count = 1;
    int length = 8;
    uint64_t seed = 0;

    bool operator==(const PromptSpec&) const = default;
};

struct ExperimentConfig {
    int schema_version = 1;
    std::string config_id = "run";
    Method method = Method::adaedl;
    TargetSpec target;
    DraftSpec draft;
    PolicyConfig policy;
    AdjustmentSpec adjustment;
    CostModel cost;
    PromptSpec prompts;
    int generation_length = 128;
    uint64_t run_seed = 0;
    std::optional<std::string> output_dir;

    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical JSON; parse_experiment_config(emit_experiment_config(c)) == c.
std::string emit_experiment_config(const ExperimentConfig& config);

// A sweep is a base experiment plus value lists for scalar config fields,
// addressed by dot paths ("adjustment.temperature", "policy.initial_lambda",
// "method", "cost.ratio", ...). Points are the cross product of all axes.
struct SweepAxis {
    std::string path;
    std::vector<std::string> values;  // JSON literals, e.g. "0.7" or "\"adaedl\""

    bool operator==(const SweepAxis&) const = default;
};

struct SweepSpec {
    std::string base_json;         // canonical serialized base config
    std::vector<SweepAxis> axes;   // sorted by path
    size_t cap = 10000;

    bool operator==(const SweepSpec&) const = default;
};

SweepSpec parse_sweep_spec(const std::string& json_text);
SweepSpec load_sweep_spec(const std::string& path);

// Expands the cross product (odometer order, last axis fastest) and assigns
// config ids. Errors out before any expansion when the product exceeds cap.
std::vector<ExperimentConfig> expand_sweep(const SweepSpec& spec);

// Named draft/verify cost-ratio presets (model parameter-count ratios used
// as cost proxies); resolvable in the config as cost.preset.
const std::vector<std::pair<std::string, double>>& cost_ratio_presets();

std::vector<std::vector<int>> build_prompt_corpus(const PromptSpec& spec, int vocab_size);

}  // namespace specsim
