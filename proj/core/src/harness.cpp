#include "specsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace specsim {

using nlohmann::json;

const char* const kCsvHeader =
    "config_id,method,policy,L,temperature,gamma,lambda0,dynamic_lambda,cost_ratio,"
    "prompt_id,tokens,sim_seconds,tps,acceptance_rate,mean_accepted,std_accepted,"
    "residual_fallbacks,seed";

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

namespace {

struct ResolvedModels {
    MarkovModel target;
    std::optional<MarkovModel> draft;
};

MarkovModel resolve_target(const TargetSpec& spec) {
    if (spec.file) {
        if (!std::filesystem::exists(*spec.file)) {
            throw ConfigError("/target/file", "file not found: " + *spec.file);
        }
        return MarkovModel::load_file(*spec.file);
    }
    const GeneratorSpec& gen = *spec.generate;
    return MarkovModel::random_target(gen.vocab_size, gen.order, gen.concentration, gen.seed);
}

ResolvedModels resolve_models(const ExperimentConfig& config) {
    ResolvedModels models{resolve_target(config.target), std::nullopt};
    if (config.method == Method::autoregressive) return models;
    if (config.draft.file) {
        if (!std::filesystem::exists(*config.draft.file)) {
            throw ConfigError("/draft/file", "file not found: " + *config.draft.file);
        }
        models.draft = MarkovModel::load_file(*config.draft.file);
        if (models.draft->vocab_size() != models.target.vocab_size()) {
            throw ConfigError("/draft/file", "draft vocab size " +
                                                 std::to_string(models.draft->vocab_size()) +
                                                 " does not match target vocab size " +
                                                 std::to_string(models.target.vocab_size()));
        }
    } else {
        models.draft = MarkovModel::derive_draft(models.target, *config.draft.derive);
    }
    return models;
}

// Columns shared by per-prompt and aggregate rows.
std::string csv_row_prefix(const ExperimentConfig& config) {
    const bool autoregressive = config.method == Method::autoregressive;
    std::string row;
    row += config.config_id;
    row += ',';
    row += to_string(config.method);
    row += ',';
    row += autoregressive ? "none" : to_string(config.policy.kind);
    row += ',';
    row += std::to_string(autoregressive ? 0 : config.policy.max_draft_length);
    row += ',';
    row += format_double(config.adjustment.temperature);
    row += ',';
    row += format_double(autoregressive ? 0.0 : config.policy.gamma);
    row += ',';
    row += format_double(autoregressive ? 0.0 : config.policy.initial_lambda);
    row += ',';
    row += (!autoregressive && config.policy.dynamic_lambda) ? "1" : "0";
    row += ',';
    row += format_double(config.cost.cost_ratio());
    return row;
}

std::string csv_metrics(int prompt_id, uint64_t tokens, double sim_seconds, double tps,
                        double acceptance_rate, double mean_accepted, double std_accepted,
                        uint64_t residual_fallbacks, uint64_t seed) {
    std::string row;
    row += std::to_string(prompt_id);
    row += ',';
    row += std::to_string(tokens);
    row += ',';
    row += format_double(sim_seconds);
    row += ',';
    row += format_double(tps);
    row += ',';
    row += format_double(acceptance_rate);
    row += ',';
    row += format_double(mean_accepted);
    row += ',';
    row += format_double(std_accepted);
    row += ',';
    row += std::to_string(residual_fallbacks);
    row += ',';
    row += std::to_string(seed);
    return row;
}

json round_to_json(const DraftRoundRecord& round) {
    json j;
    j["round"] = round.round_index;
    j["n_drafted"] = round.n_drafted;
    j["n_accepted"] = round.n_accepted;
    j["stop_reason"] = to_string(round.stop_reason);
    j["lambda"] = round.lambda_at_round;
    j["criteria"] = round.criterion_values;
    j["sim_time"] = round.simulated_time;
    return j;
}

json aggregate_to_json(const AggregateStats& agg) {
    json j;
    j["tps_mean"] = agg.tps_mean;
    j["tps_std"] = agg.tps_std;
    j["acceptance_rate"] = agg.acceptance_rate;
    j["mean_accepted"] = agg.mean_accepted;
    j["std_accepted"] = agg.std_accepted;
    j["accepted_count_histogram"] = agg.accepted_count_histogram;
    j["residual_fallbacks"] = agg.residual_fallbacks;
    j["total_tokens"] = agg.total_tokens;
    j["total_simulated_seconds"] = agg.total_simulated_seconds;
    j["total_rounds"] = agg.total_rounds;
    j["total_drafted"] = agg.total_drafted;
    j["total_accepted"] = agg.total_accepted;
    return j;
}

json prompt_to_json(const PromptResult& prompt, bool include_rounds) {
    const RunReport& rep = prompt.report;
    json j;
    j["prompt_id"] = prompt.prompt_id;
    j["tokens"] = rep.total_tokens_emitted;
    j["sim_seconds"] = rep.total_simulated_seconds;
    j["tps"] = rep.tps;
    j["acceptance_rate"] = rep.acceptance_rate;
    j["mean_accepted"] = rep.mean_accepted;
    j["std_accepted"] = rep.std_accepted;
    j["accepted_count_histogram"] = rep.accepted_count_histogram;
    j["residual_fallbacks"] = rep.residual_fallback_count;
    j["total_rounds"] = rep.total_rounds;
    if (include_rounds) {
        json rounds = json::array();
        for (const DraftRoundRecord& round : rep.rounds) rounds.push_back(round_to_json(round));
        j["rounds"] = rounds;
    }
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);  // no newline translation; bytes are the contract
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string csv_preamble() {
    return "# specsim-csv " + std::to_string(kCsvSchemaVersion) + "\n" + kCsvHeader + "\n";
}

}  // namespace

AggregateStats aggregate_prompt_results(const std::vector<PromptResult>& results) {
    AggregateStats agg;
    if (results.empty()) return agg;

    size_t hist_size = 0;
    for (const PromptResult& r : results) {
        hist_size = std::max(hist_size, r.report.accepted_count_histogram.size());
    }
    agg.accepted_count_histogram.assign(hist_size, 0);

    double tps_sum = 0.0;
    double tps_sq_sum = 0.0;
    for (const PromptResult& r : results) {
        const RunReport& rep = r.report;
        tps_sum += rep.tps;
        tps_sq_sum += rep.tps * rep.tps;
        agg.total_tokens += rep.total_tokens_emitted;
        agg.total_simulated_seconds += rep.total_simulated_seconds;
        agg.total_rounds += rep.total_rounds;
        agg.total_drafted += rep.total_drafted;
        agg.total_accepted += rep.total_accepted;
        agg.residual_fallbacks += rep.residual_fallback_count;
        for (size_t k = 0; k < rep.accepted_count_histogram.size(); ++k) {
            agg.accepted_count_histogram[k] += rep.accepted_count_histogram[k];
        }
    }
    const double n = static_cast<double>(results.size());
    agg.tps_mean = tps_sum / n;
    const double tps_var = tps_sq_sum / n - agg.tps_mean * agg.tps_mean;
    agg.tps_std = tps_var > 0.0 ? std::sqrt(tps_var) : 0.0;

    if (agg.total_drafted > 0) {
        agg.acceptance_rate =
            static_cast<double>(agg.total_accepted) / static_cast<double>(agg.total_drafted);
    }
    if (agg.total_rounds > 0) {
        double sum = 0.0;
        double sq_sum = 0.0;
        for (size_t k = 0; k < agg.accepted_count_histogram.size(); ++k) {
            const double count = static_cast<double>(agg.accepted_count_histogram[k]);
            sum += count * static_cast<double>(k);
            sq_sum += count * static_cast<double>(k) * static_cast<double>(k);
        }
        const double rounds = static_cast<double>(agg.total_rounds);
        agg.mean_accepted = sum / rounds;
        const double var = sq_sum / rounds - agg.mean_accepted * agg.mean_accepted;
        agg.std_accepted = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return agg;
}

ExperimentResult execute_experiment(const ExperimentConfig& config, bool record_rounds,
                                    std::optional<uint64_t> seed_override) {
    ResolvedModels models = resolve_models(config);
    config.adjustment.validate(models.target.vocab_size());
    config.cost.validate();
    config.policy.validate();

    ExperimentResult result;
    result.config = config;
    result.effective_seed = seed_override.value_or(config.run_seed);

    const std::vector<std::vector<int>> prompts =
        build_prompt_corpus(config.prompts, models.target.vocab_size());

    RngState run_root(result.effective_seed);
    ControllerState persistent = ControllerState::init(config.policy);

    result.per_prompt.reserve(prompts.size());
    for (size_t i = 0; i < prompts.size(); ++i) {
        RngState rng = run_root.split(i);
        GenerationResult gen;
        if (config.method == Method::autoregressive) {
            gen = generate_autoregressive(models.target, prompts[i], config.generation_length,
                                          config.adjustment, rng, config.cost);
        } else {
            SpeculativeOptions options;
            options.record_rounds = record_rounds;
            if (config.policy.persist_controller_across_prompts) {
                options.controller = &persistent;
            }
            gen = generate_speculative(models.target, *models.draft, prompts[i],
                                       config.generation_length, config.policy,
                                       config.adjustment, rng, config.cost, options);
        }
        result.per_prompt.push_back(PromptResult{static_cast<int>(i), std::move(gen.report)});
    }
    result.aggregate = aggregate_prompt_results(result.per_prompt);
    return result;
}

std::string csv_prompt_row(const ExperimentConfig& config, uint64_t effective_seed,
                           const PromptResult& prompt) {
    const RunReport& rep = prompt.report;
    return csv_row_prefix(config) + ',' +
           csv_metrics(prompt.prompt_id, rep.total_tokens_emitted, rep.total_simulated_seconds,
                       rep.tps, rep.acceptance_rate, rep.mean_accepted, rep.std_accepted,
                       rep.residual_fallback_count, effective_seed);
}

std::string csv_aggregate_row(const ExperimentConfig& config, uint64_t effective_seed,
                              const AggregateStats& agg) {
    return csv_row_prefix(config) + ',' +
           csv_metrics(-1, agg.total_tokens, agg.total_simulated_seconds, agg.tps_mean,
                       agg.acceptance_rate, agg.mean_accepted, agg.std_accepted,
                       agg.residual_fallbacks, effective_seed);
}

RunOutputs write_run_outputs(const ExperimentResult& result,
                             const std::filesystem::path& out_dir, bool include_rounds) {
    std::filesystem::create_directories(out_dir);

    std::string csv = csv_preamble();
    csv += csv_aggregate_row(result.config, result.effective_seed, result.aggregate) + "\n";
    for (const PromptResult& prompt : result.per_prompt) {
        csv += csv_prompt_row(result.config, result.effective_seed, prompt) + "\n";
    }

    json report;
    report["schema_version"] = 1;
    report["csv_schema_version"] = kCsvSchemaVersion;
    report["kind"] = "run-report";
    report["config"] = json::parse(emit_experiment_config(result.config));
    report["effective_seed"] = result.effective_seed;
    report["aggregate"] = aggregate_to_json(result.aggregate);
    json per_prompt = json::array();
    for (const PromptResult& prompt : result.per_prompt) {
        per_prompt.push_back(prompt_to_json(prompt, include_rounds));
    }
    report["per_prompt"] = per_prompt;

    RunOutputs outputs;
    outputs.csv_path = out_dir / (result.config.config_id + ".csv");
    outputs.report_path = out_dir / (result.config.config_id + ".report.json");
    write_text_file(outputs.csv_path, csv);
    write_text_file(outputs.report_path, report.dump(2) + "\n");
    return outputs;
}

RunOutputs run_experiment_to_files(const ExperimentConfig& config,
                                   const std::filesystem::path& out_dir, bool verbose_rounds,
                                   std::optional<uint64_t> seed_override) {
    const ExperimentResult result = execute_experiment(config, verbose_rounds, seed_override);
    return write_run_outputs(result, out_dir, verbose_rounds);
}

RunOutputs run_sweep_to_files(const SweepSpec& spec, const std::filesystem::path& out_dir,
                              int workers, std::optional<uint64_t> seed_override) {
    const std::vector<ExperimentConfig> points = expand_sweep(spec);

    std::vector<ExperimentResult> results(points.size());
    std::atomic<size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto work = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= points.size()) return;
            try {
                results[i] = execute_experiment(points[i], false, seed_override);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const size_t n_threads =
        std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(workers, 1)),
                                             points.size()));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Deterministic output regardless of scheduling: points were expanded in
    // order, rows go out sorted by (config_id, prompt_id) with the aggregate
    // row (prompt_id -1) first.
    std::vector<size_t> order(results.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return results[a].config.config_id < results[b].config.config_id;
    });

    std::string csv = csv_preamble();
    json point_reports = json::array();
    for (const size_t i : order) {
        const ExperimentResult& result = results[i];
        csv += csv_aggregate_row(result.config, result.effective_seed, result.aggregate) + "\n";
        for (const PromptResult& prompt : result.per_prompt) {
            csv += csv_prompt_row(result.config, result.effective_seed, prompt) + "\n";
        }
        json point;
        point["config_id"] = result.config.config_id;
        point["config"] = json::parse(emit_experiment_config(result.config));
        point["effective_seed"] = result.effective_seed;
        point["aggregate"] = aggregate_to_json(result.aggregate);
        point_reports.push_back(point);
    }

    const json base = json::parse(spec.base_json);
    const std::string sweep_id = base.contains("config_id")
                                     ? base["config_id"].get<std::string>()
                                     : std::string("run");

    json report;
    report["schema_version"] = 1;
    report["csv_schema_version"] = kCsvSchemaVersion;
    report["kind"] = "sweep-report";
    report["sweep_id"] = sweep_id;
    report["n_points"] = points.size();
    report["points"] = point_reports;

    std::filesystem::create_directories(out_dir);
    RunOutputs outputs;
    outputs.csv_path = out_dir / (sweep_id + ".sweep.csv");
    outputs.report_path = out_dir / (sweep_id + ".sweep.report.json");
    write_text_file(outputs.csv_path, csv);
    write_text_file(outputs.report_path, report.dump(2) + "\n");
    return outputs;
}

HistogramTable histogram_from_report_file(const std::filesystem::path& report_path) {
    std::ifstream in(report_path);
    if (!in) throw std::runtime_error("cannot open report '" + report_path.string() + "'");
    json report;
    try {
        in >> report;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed report JSON: " + std::string(e.what()));
    }
    if (!report.is_object() || report.value("kind", "") != "run-report") {
        throw std::runtime_error("expected a run report (kind \"run-report\")");
    }

    HistogramTable table;
    table.max_draft_length =
        report.at("config").at("policy").at("max_draft_length").get<int>();
    table.counts.assign(static_cast<size_t>(table.max_draft_length) + 1, 0);

    bool any_rounds = false;
    for (const json& prompt : report.at("per_prompt")) {
        if (!prompt.contains("rounds")) continue;
        for (const json& round : prompt.at("rounds")) {
            const int accepted = round.at("n_accepted").get<int>();
            if (accepted < 0 || accepted > table.max_draft_length) {
                throw std::runtime_error("round record with out-of-range n_accepted");
            }
            table.counts[static_cast<size_t>(accepted)] += 1;
            table.rounds += 1;
            any_rounds = true;
        }
    }
    if (!any_rounds) {
        throw std::runtime_error(
            "report contains no round records; re-run with --verbose-rounds");
    }

    double sum = 0.0;
    double sq_sum = 0.0;
    for (size_t k = 0; k < table.counts.size(); ++k) {
        sum += static_cast<double>(table.counts[k]) * static_cast<double>(k);
        sq_sum += static_cast<double>(table.counts[k]) * static_cast<double>(k) *
                  static_cast<double>(k);
    }
    const double n = static_cast<double>(table.rounds);
    table.mean = sum / n;
    const double var = sq_sum / n - table.mean * table.mean;
    table.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
    return table;
}

std::string format_histogram_text(const HistogramTable& table) {
    std::ostringstream out;
    out << "accepted  count  frac\n";
    for (size_t k = 0; k < table.counts.size(); ++k) {
        const double frac =
            table.rounds ? static_cast<double>(table.counts[k]) / table.rounds : 0.0;
        out << k << "  " << table.counts[k] << "  " << format_double(frac) << "\n";
    }
    out << "rounds=" << table.rounds << " L=" << table.max_draft_length
        << " mean=" << format_double(table.mean) << " std=" << format_double(table.stddev)
        << "\n";
    return out.str();
}

std::string format_histogram_csv(const HistogramTable& table) {
    std::string out = "accepted,count\n";
    for (size_t k = 0; k < table.counts.size(); ++k) {
        out += std::to_string(k) + "," + std::to_string(table.counts[k]) + "\n";
    }
    return out;
}

}  // namespace specsim
