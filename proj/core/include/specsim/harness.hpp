#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specsim/config.hpp"
#include "specsim/engine.hpp"

namespace specsim {

inline constexpr int kCsvSchemaVersion = 1;

// Fixed CSV column order; the schema version rides in a leading comment line.
extern const char* const kCsvHeader;

struct PromptResult {
    int prompt_id = 0;
    RunReport report;

    bool operator==(const PromptResult&) const = default;
};

struct AggregateStats {
    double tps_mean = 0.0;  // mean of per-prompt TPS
    double tps_std = 0.0;
    double acceptance_rate = 0.0;  // pooled over prompts
    double mean_accepted = 0.0;    // pooled over rounds
    double std_accepted = 0.0;
    std::vector<uint64_t> accepted_count_histogram;
    uint64_t residual_fallbacks = 0;
    uint64_t total_tokens = 0;
    double total_simulated_seconds = 0.0;
    uint64_t total_rounds = 0;
    uint64_t total_drafted = 0;
    uint64_t total_accepted = 0;

    bool operator==(const AggregateStats&) const = default;
};

struct ExperimentResult {
    ExperimentConfig config;
    uint64_t effective_seed = 0;
    std::vector<PromptResult> per_prompt;
    AggregateStats aggregate;

    bool operator==(const ExperimentResult&) const = default;
};

AggregateStats aggregate_prompt_results(const std::vector<PromptResult>& results);

// Runs every prompt of the experiment. seed_override replaces the config's
// run_seed when given (the CLI --seed flag).
ExperimentResult execute_experiment(const ExperimentConfig& config, bool record_rounds,
                                    std::optional<uint64_t> seed_override = std::nullopt);

struct RunOutputs {
    std::filesystem::path csv_path;
    std::filesystem::path report_path;
};

// Writes <config_id>.csv (one row per prompt plus an aggregate row with
// prompt_id -1) and <config_id>.report.json.
RunOutputs write_run_outputs(const ExperimentResult& result,
                             const std::filesystem::path& out_dir, bool include_rounds);

RunOutputs run_experiment_to_files(const ExperimentConfig& config,
                                   const std::filesystem::path& out_dir, bool verbose_rounds,
                                   std::optional<uint64_t> seed_override = std::nullopt);

// Executes every sweep point (up to `workers` in parallel; output order is
// independent of scheduling) and writes <id>.sweep.csv / <id>.sweep.report.json
// with rows sorted by (config_id, prompt_id).
RunOutputs run_sweep_to_files(const SweepSpec& spec, const std::filesystem::path& out_dir,
                              int workers,
                              std::optional<uint64_t> seed_override = std::nullopt);

// CSV row material, exposed for tests.
std::string csv_prompt_row(const ExperimentConfig& config, uint64_t effective_seed,
                           const PromptResult& prompt);
std::string csv_aggregate_row(const ExperimentConfig& config, uint64_t effective_seed,
                              const AggregateStats& aggregate);

struct HistogramTable {
    int max_draft_length = 0;
    std::vector<uint64_t> counts;  // indexed 0..L
    uint64_t rounds = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

// Rebuilds the accepted-count histogram from the round records of a run
// report. Throws when the report carries no round records.
HistogramTable histogram_from_report_file(const std::filesystem::path& report_path);

std::string format_histogram_text(const HistogramTable& table);
std::string format_histogram_csv(const HistogramTable& table);

// Shortest round-trip decimal form (deterministic across runs).
std::string format_double(double value);

}  // namespace specsim
