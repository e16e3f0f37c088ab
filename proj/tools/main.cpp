// specsim CLI: run experiments, sweep config grids, inspect reports, and
// exercise the verification suites from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "specsim/config.hpp"
#include "specsim/harness.hpp"
#include "specsim/markov_model.hpp"
#include "specsim/verify_suites.hpp"

namespace {

namespace fs = std::filesystem;

std::string resolve_out_dir(const std::string& flag,
                            const std::optional<std::string>& config_dir) {
    if (!flag.empty()) return flag;
    if (config_dir && !config_dir->empty()) return *config_dir;
    if (const char* env = std::getenv("SPECSIM_OUT_DIR"); env && *env) return env;
    return "out";
}

void print_policy_warnings(const specsim::ExperimentConfig& config) {
    for (const std::string& warning : config.policy.warnings()) {
        std::cerr << "warning: " << warning << "\n";
    }
}

int cmd_run(const std::string& config_path, const std::string& out_flag,
            std::optional<uint64_t> seed, bool verbose_rounds) {
    const specsim::ExperimentConfig config = specsim::load_experiment_config(config_path);
    print_policy_warnings(config);
    const std::string out_dir = resolve_out_dir(out_flag, config.output_dir);
    const specsim::RunOutputs outputs =
        specsim::run_experiment_to_files(config, out_dir, verbose_rounds, seed);
    std::cout << "wrote " << outputs.csv_path.string() << "\n";
    std::cout << "wrote " << outputs.report_path.string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& sweep_path, const std::string& out_flag,
              std::optional<uint64_t> seed, int workers) {
    const specsim::SweepSpec spec = specsim::load_sweep_spec(sweep_path);
    const specsim::ExperimentConfig base = specsim::parse_experiment_config(spec.base_json);
    print_policy_warnings(base);
    const std::string out_dir = resolve_out_dir(out_flag, base.output_dir);
    const specsim::RunOutputs outputs =
        specsim::run_sweep_to_files(spec, out_dir, workers, seed);
    std::cout << "wrote " << outputs.csv_path.string() << "\n";
    std::cout << "wrote " << outputs.report_path.string() << "\n";
    return 0;
}

int cmd_histogram(const std::string& report_path, const std::string& out_file) {
    const specsim::HistogramTable table =
        specsim::histogram_from_report_file(report_path);
    std::cout << specsim::format_histogram_text(table);
    if (!out_file.empty()) {
        std::ofstream out(out_file, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open '" + out_file + "' for writing");
        out << specsim::format_histogram_csv(table);
        std::cout << "wrote " << out_file << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed) {
    std::vector<specsim::PropertyResult> results;
    if (suite == "losslessness") {
        results = specsim::verify_losslessness(seed);
    } else if (suite == "pinsker") {
        results = specsim::verify_pinsker(seed);
    } else if (suite == "controller") {
        results = specsim::verify_controller(seed);
    } else if (suite == "clock") {
        results = specsim::verify_clock(seed);
    } else {
        throw std::runtime_error("unknown suite '" + suite +
                                 "' (expected losslessness, pinsker, controller, or clock)");
    }
    for (const specsim::PropertyResult& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " — " << r.detail << "\n";
    }
    const bool ok = specsim::all_passed(results);
    std::cout << (ok ? "suite passed" : "suite FAILED") << " (" << results.size()
              << " properties)\n";
    return ok ? 0 : 1;
}

int cmd_gen_model(const std::string& out_path, const std::string& from_path,
                  const std::string& mode, double strength, int vocab, int order,
                  double concentration, uint64_t seed) {
    if (!from_path.empty()) {
        const specsim::MarkovModel base = specsim::MarkovModel::load_file(from_path);
        specsim::DerivedDraftSpec spec;
        spec.mode = specsim::draft_mode_from_string(mode);
        spec.strength = strength;
        spec.seed = seed;
        const specsim::MarkovModel draft = specsim::MarkovModel::derive_draft(base, spec);
        draft.save_file(out_path);
    } else {
        const specsim::MarkovModel model =
            specsim::MarkovModel::random_target(vocab, order, concentration, seed);
        model.save_file(out_path);
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"specsim — a speculative-decoding simulation lab"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "execute one experiment config");
    std::string run_config;
    std::string run_out;
    std::optional<uint64_t> run_seed;
    bool run_verbose = false;
    run->add_option("--config", run_config, "experiment config (JSON)")->required();
    run->add_option("--out", run_out, "output directory (default: config, $SPECSIM_OUT_DIR, out)");
    run->add_option("--seed", run_seed, "override the config's run_seed");
    run->add_flag("--verbose-rounds", run_verbose, "record per-round logs in the report");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "execute a config cross product");
    std::string sweep_config;
    std::string sweep_out;
    std::optional<uint64_t> sweep_seed;
    int sweep_workers = 1;
    sweep->add_option("--config", sweep_config, "sweep spec (JSON)")->required();
    sweep->add_option("--out", sweep_out, "output directory");
    sweep->add_option("--seed", sweep_seed, "override the base config's run_seed");
    sweep->add_option("--workers", sweep_workers, "parallel sweep points (default 1)")
        ->check(CLI::PositiveNumber);

    // histogram
    auto* histogram = app.add_subcommand("histogram", "accepted-token histogram of a run report");
    std::string histogram_report;
    std::string histogram_out;
    histogram->add_option("--report", histogram_report, "run report JSON (needs round records)")
        ->required();
    histogram->add_option("--out", histogram_out, "also write the table as CSV");

    // verify
    auto* verify = app.add_subcommand("verify", "run an oracle/property suite");
    std::string verify_suite;
    uint64_t verify_seed = 20240901;
    verify->add_option("--suite", verify_suite, "losslessness | pinsker | controller | clock")
        ->required();
    verify->add_option("--seed", verify_seed, "suite RNG seed");

    // gen-model
    auto* gen = app.add_subcommand("gen-model", "generate or derive a model file");
    std::string gen_out;
    std::string gen_from;
    std::string gen_mode = "mixture-with-uniform";
    double gen_strength = 0.5;
    int gen_vocab = 32;
    int gen_order = 1;
    double gen_concentration = 1.0;
    uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output model file")->required();
    gen->add_option("--from", gen_from, "derive a draft from this base model file");
    gen->add_option("--mode", gen_mode,
                    "temperature-perturb | mixture-with-uniform | dirichlet-resample");
    gen->add_option("--strength", gen_strength, "perturbation strength in [0, 1]");
    gen->add_option("--vocab", gen_vocab, "vocab size (generate mode)");
    gen->add_option("--order", gen_order, "Markov order (generate mode)");
    gen->add_option("--concentration", gen_concentration, "Dirichlet concentration");
    gen->add_option("--seed", gen_seed, "model seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_config, run_out, run_seed, run_verbose);
        if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_out, sweep_seed, sweep_workers);
        if (histogram->parsed()) return cmd_histogram(histogram_report, histogram_out);
        if (verify->parsed()) return cmd_verify(verify_suite, verify_seed);
        if (gen->parsed()) {
            return cmd_gen_model(gen_out, gen_from, gen_mode, gen_strength, gen_vocab, gen_order,
                                 gen_concentration, gen_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
