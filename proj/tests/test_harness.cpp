#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "specsim/config.hpp"
#include "specsim/harness.hpp"

using namespace specsim;
namespace fs = std::filesystem;

namespace {

const char* kBaseConfig = R"json({
  "config_id": "demo",
  "method": "adaedl",
  "target": {"generate": {"vocab_size": 16, "order": 1, "concentration": 0.5, "seed": 11}},
  "draft": {"derive": {"mode": "dirichlet-resample", "strength": 0.5, "seed": 12}},
  "policy": {"max_draft_length": 5, "gamma": 0.2, "initial_lambda": 0.5},
  "adjustment": {"temperature": 1.0},
  "cost": {"t_verify_round": 0.04, "ratio": 8.0},
  "prompts": {"count": 3, "length": 4, "seed": 9},
  "generation_length": 64,
  "run_seed": 21
})json";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "specsim-tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> csv_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) lines.push_back(line);
    return lines;
}

int count_aggregate_rows(const std::string& csv) {
    int count = 0;
    for (const std::string& line : csv_lines(csv)) {
        if (line.find(",-1,") != std::string::npos) ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("experiment config parses and round-trips") {
    const ExperimentConfig config = parse_experiment_config(kBaseConfig);
    CHECK(config.config_id == "demo");
    CHECK(config.method == Method::adaedl);
    CHECK(config.policy.kind == PolicyKind::adaedl);
    CHECK(config.policy.dynamic_lambda);  // threshold methods default to dynamic
    CHECK(config.policy.max_draft_length == 5);
    CHECK(config.cost.t_draft_token == doctest::Approx(0.04 / 8.0));
    CHECK(config.prompts.count == 3);

    const ExperimentConfig reparsed = parse_experiment_config(emit_experiment_config(config));
    CHECK(reparsed == config);
}

TEST_CASE("config errors name the offending field") {
    auto expect_error = [](const std::string& mutation, const std::string& path_fragment) {
        try {
            parse_experiment_config(mutation);
            FAIL_CHECK("expected a ConfigError for " << path_fragment);
        } catch (const ConfigError& e) {
            CHECK(e.path().find(path_fragment) != std::string::npos);
        }
    };

    std::string bad_temp = kBaseConfig;
    bad_temp.replace(bad_temp.find("\"temperature\": 1.0"), 18, "\"temperature\": -1");
    expect_error(bad_temp, "/adjustment/temperature");

    std::string bad_method = kBaseConfig;
    bad_method.replace(bad_method.find("\"adaedl\""), 8, "\"magic\"");
    expect_error(bad_method, "/method");

    std::string unknown_key = kBaseConfig;
    unknown_key.replace(unknown_key.find("\"run_seed\""), 10, "\"run_sed\"");
    expect_error(unknown_key, "/run_sed");

    std::string bad_gamma = kBaseConfig;
    bad_gamma.replace(bad_gamma.find("\"gamma\": 0.2"), 12, "\"gamma\": 0");
    expect_error(bad_gamma, "/policy/gamma");
}

TEST_CASE("method and policy consistency") {
    std::string base_spd = kBaseConfig;
    base_spd.replace(base_spd.find("\"adaedl\""), 8, "\"base-spd\"");
    const ExperimentConfig config = parse_experiment_config(base_spd);
    CHECK(config.policy.kind == PolicyKind::static_length);
    CHECK_FALSE(config.policy.dynamic_lambda);

    std::string contradictory = base_spd;
    contradictory.replace(contradictory.find("\"initial_lambda\": 0.5"), 21,
                          "\"initial_lambda\": 0.5, \"dynamic_lambda\": true");
    CHECK_THROWS_AS(parse_experiment_config(contradictory), ConfigError);

    std::string no_draft = R"json({
      "method": "base-spd",
      "target": {"generate": {"vocab_size": 8}},
      "prompts": {"count": 1, "length": 2, "seed": 0},
      "generation_length": 8
    })json";
    CHECK_THROWS_AS(parse_experiment_config(no_draft), ConfigError);

    std::string conflicting_cost = kBaseConfig;
    conflicting_cost.replace(conflicting_cost.find("\"ratio\": 8.0"), 12,
                             "\"ratio\": 8.0, \"t_draft_token\": 0.001");
    CHECK_THROWS_AS(parse_experiment_config(conflicting_cost), ConfigError);
}

TEST_CASE("cost presets resolve to draft step times") {
    std::string preset = kBaseConfig;
    preset.replace(preset.find("\"ratio\": 8.0"), 12,
                   "\"preset\": \"llama2-7b:tinyllama-1b\"");
    const ExperimentConfig config = parse_experiment_config(preset);
    CHECK(config.cost.t_draft_token == doctest::Approx(0.04 / 7.0));

    std::string unknown = kBaseConfig;
    unknown.replace(unknown.find("\"ratio\": 8.0"), 12, "\"preset\": \"gpt-42\"");
    CHECK_THROWS_AS(parse_experiment_config(unknown), ConfigError);
}

TEST_CASE("prompt corpus is seed-deterministic") {
    PromptSpec spec;
    spec.count = 4;
    spec.length = 6;
    spec.seed = 77;
    const auto a = build_prompt_corpus(spec, 16);
    const auto b = build_prompt_corpus(spec, 16);
    CHECK(a == b);
    REQUIRE(a.size() == 4);
    for (const auto& prompt : a) {
        CHECK(prompt.size() == 6);
        for (int tok : prompt) {
            CHECK(tok >= 0);
            CHECK(tok < 16);
        }
    }
    spec.seed = 78;
    CHECK(build_prompt_corpus(spec, 16) != a);
}

TEST_CASE("execute_experiment is deterministic and aggregates correctly") {
    const ExperimentConfig config = parse_experiment_config(kBaseConfig);
    const ExperimentResult a = execute_experiment(config, false);
    const ExperimentResult b = execute_experiment(config, false);
    CHECK(a == b);
    REQUIRE(a.per_prompt.size() == 3);

    double tps_sum = 0.0;
    for (const PromptResult& p : a.per_prompt) tps_sum += p.report.tps;
    CHECK(a.aggregate.tps_mean == doctest::Approx(tps_sum / 3.0).epsilon(1e-12));

    const ExperimentResult c = execute_experiment(config, false, 999);
    CHECK(c.effective_seed == 999);
    CHECK(c.per_prompt != a.per_prompt);
}

TEST_CASE("run outputs: schema, aggregate row, determinism") {
    const ExperimentConfig config = parse_experiment_config(kBaseConfig);
    const fs::path dir = fresh_dir("run");
    const RunOutputs outputs = run_experiment_to_files(config, dir, true);

    const std::string csv = read_file(outputs.csv_path);
    const auto lines = csv_lines(csv);
    REQUIRE(lines.size() == 2 + 1 + 3);  // preamble, header, aggregate, 3 prompts
    CHECK(lines[0] == "# specsim-csv 1");
    CHECK(lines[1] == std::string(kCsvHeader));
    CHECK(lines[2].find("demo,adaedl,adaedl,5,1,0.2,0.5,1,8,-1,") == 0);

    // The aggregate row's TPS equals the mean of the per-prompt TPS column.
    const ExperimentResult result = execute_experiment(config, false);
    const std::string aggregate_row = csv_aggregate_row(config, result.effective_seed,
                                                        result.aggregate);
    CHECK(lines[2] == aggregate_row);

    // Re-running produces byte-identical files.
    const fs::path dir2 = fresh_dir("run-again");
    const RunOutputs outputs2 = run_experiment_to_files(config, dir2, true);
    CHECK(read_file(outputs2.csv_path) == csv);
    CHECK(read_file(outputs2.report_path) == read_file(outputs.report_path));
}

TEST_CASE("histogram command consumes verbose reports") {
    const ExperimentConfig config = parse_experiment_config(kBaseConfig);
    const fs::path dir = fresh_dir("histogram");

    SUBCASE("verbose run yields a table") {
        const RunOutputs outputs = run_experiment_to_files(config, dir, true);
        const HistogramTable table = histogram_from_report_file(outputs.report_path);
        CHECK(table.max_draft_length == 5);
        CHECK(table.counts.size() == 6);
        CHECK(table.rounds > 0);
        uint64_t total = 0;
        for (uint64_t c : table.counts) total += c;
        CHECK(total == table.rounds);
        const std::string text = format_histogram_text(table);
        CHECK(text.find("mean=") != std::string::npos);
    }

    SUBCASE("non-verbose reports advise --verbose-rounds") {
        const RunOutputs outputs = run_experiment_to_files(config, dir, false);
        CHECK_THROWS_WITH_AS(histogram_from_report_file(outputs.report_path),
                             doctest::Contains("--verbose-rounds"), std::runtime_error);
    }

    SUBCASE("all-accept run has zero spread") {
        // Static draft length with draft == target: every round accepts all
        // five drafts.
        std::string identical = kBaseConfig;
        identical.replace(identical.find("\"strength\": 0.5"), 15, "\"strength\": 0.0");
        identical.replace(identical.find("\"adaedl\""), 8, "\"base-spd\"");
        const RunOutputs outputs =
            run_experiment_to_files(parse_experiment_config(identical), dir, true);
        const HistogramTable table = histogram_from_report_file(outputs.report_path);
        CHECK(table.counts[5] == table.rounds);  // all mass at L
        CHECK(table.stddev == 0.0);
        CHECK(table.mean == 5.0);
    }
}

TEST_CASE("sweep expansion counts and determinism") {
    const std::string sweep_json = std::string(R"json({
      "base": )json") + kBaseConfig + R"json(,
      "axes": {
        "adjustment.temperature": [0.7, 1.0, 1.3, 1.7],
        "method": ["autoregressive", "base-spd", "max-confidence-spd", "adaedl"]
      }
    })json";
    const SweepSpec spec = parse_sweep_spec(sweep_json);
    const std::vector<ExperimentConfig> points = expand_sweep(spec);
    CHECK(points.size() == 16);

    const fs::path dir = fresh_dir("sweep");
    const RunOutputs outputs = run_sweep_to_files(spec, dir, 4);
    const std::string csv = read_file(outputs.csv_path);
    CHECK(count_aggregate_rows(csv) == 16);

    // Parallel workers must not change the bytes.
    const fs::path dir2 = fresh_dir("sweep-workers");
    const RunOutputs outputs2 = run_sweep_to_files(spec, dir2, 1);
    CHECK(read_file(outputs2.csv_path) == csv);
}

TEST_CASE("lambda-axis sweep counts aggregate rows per method") {
    const std::string sweep_json = std::string(R"json({
      "base": )json") + kBaseConfig + R"json(,
      "axes": {
        "policy.initial_lambda": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "method": ["max-confidence-spd", "adaedl"]
      }
    })json";
    const std::vector<ExperimentConfig> points = expand_sweep(parse_sweep_spec(sweep_json));
    CHECK(points.size() == 18);
}

TEST_CASE("empty-axes sweep equals a plain run") {
    const std::string sweep_json = std::string(R"json({"base": )json") + kBaseConfig + "}";
    const SweepSpec spec = parse_sweep_spec(sweep_json);
    const std::vector<ExperimentConfig> points = expand_sweep(spec);
    REQUIRE(points.size() == 1);
    CHECK(points[0] == parse_experiment_config(kBaseConfig));

    const fs::path sweep_dir = fresh_dir("degenerate-sweep");
    const fs::path run_dir = fresh_dir("degenerate-run");
    const RunOutputs sweep_out = run_sweep_to_files(spec, sweep_dir, 1);
    const RunOutputs run_out =
        run_experiment_to_files(parse_experiment_config(kBaseConfig), run_dir, false);
    CHECK(read_file(sweep_out.csv_path) == read_file(run_out.csv_path));
}

TEST_CASE("sweep cap rejects oversized cross products before any work") {
    const std::string sweep_json = std::string(R"json({
      "base": )json") + kBaseConfig + R"json(,
      "axes": {"policy.initial_lambda": [0.1, 0.2, 0.3, 0.4]},
      "cap": 3
    })json";
    const SweepSpec spec = parse_sweep_spec(sweep_json);
    CHECK_THROWS_AS(expand_sweep(spec), ConfigError);
}

TEST_CASE("missing model files fail with the field path") {
    std::string file_config = R"json({
      "method": "autoregressive",
      "target": {"file": "/nonexistent/model.txt"},
      "prompts": {"count": 1, "length": 2, "seed": 0},
      "generation_length": 8
    })json";
    const ExperimentConfig config = parse_experiment_config(file_config);
    try {
        execute_experiment(config, false);
        FAIL_CHECK("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "/target/file");
    }
}

TEST_CASE("format_double emits shortest round-trip forms") {
    CHECK(format_double(25.0) == "25");
    CHECK(format_double(0.7) == "0.7");
    CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
}
