#include "specsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace specsim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path.empty() ? "/" : path, msg);
}

// Cursor over a JSON object that tracks its path for error messages and
// rejects keys it was never asked about (catches typos).
class ObjectView {
public:
    ObjectView(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail(path_, "expected an object");
    }

    bool has(const char* key) const { return node_.contains(key) && !node_[key].is_null(); }

    std::string child_path(const char* key) const { return path_ + "/" + key; }

    const json& raw(const char* key) const { return node_.at(key); }

    double number(const char* key) const {
        require(key);
        return as_number(key);
    }
    double number_or(const char* key, double fallback) const {
        return has(key) ? as_number(key) : fallback;
    }
    int integer_or(const char* key, int fallback) const {
        if (!has(key)) return fallback;
        const json& v = node_[key];
        if (!v.is_number_integer() && !v.is_number_unsigned()) {
            fail(child_path(key), "expected an integer");
        }
        return v.get<int>();
    }
    uint64_t u64_or(const char* key, uint64_t fallback) const {
        if (!has(key)) return fallback;
        const json& v = node_[key];
        if (v.is_number_unsigned()) return v.get<uint64_t>();
        if (v.is_number_integer() && v.get<int64_t>() >= 0) {
            return static_cast<uint64_t>(v.get<int64_t>());
        }
        fail(child_path(key), "expected a non-negative integer");
    }
    bool boolean_or(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        const json& v = node_[key];
        if (!v.is_boolean()) fail(child_path(key), "expected a boolean");
        return v.get<bool>();
    }
    std::string string(const char* key) const {
        require(key);
        const json& v = node_[key];
        if (!v.is_string()) fail(child_path(key), "expected a string");
        return v.get<std::string>();
    }
    std::string string_or(const char* key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    std::optional<ObjectView> maybe_object(const char* key) const {
        if (!has(key)) return std::nullopt;
        return ObjectView(node_[key], child_path(key));
    }

    void reject_unknown(std::initializer_list<const char*> known) const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (std::none_of(known.begin(), known.end(),
                             [&](const char* k) { return it.key() == k; })) {
                fail(path_ + "/" + it.key(), "unknown field");
            }
        }
    }

    const std::string& path() const { return path_; }

private:
    void require(const char* key) const {
        if (!has(key)) fail(child_path(key), "missing required field");
    }
    double as_number(const char* key) const {
        const json& v = node_[key];
        if (!v.is_number()) fail(child_path(key), "expected a number");
        return v.get<double>();
    }

    const json& node_;
    std::string path_;
};

json parse_json_text(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail("/", std::string(what) + ": " + e.what());
    }
}

AdjustmentSpec parse_adjustment(const ObjectView& view) {
    view.reject_unknown({"temperature", "top_k", "nucleus_p"});
    AdjustmentSpec spec;
    spec.temperature = view.number_or("temperature", 1.0);
    if (!(spec.temperature > 0.0) || !std::isfinite(spec.temperature)) {
        fail(view.child_path("temperature"), "must be a positive finite number");
    }
    if (view.has("top_k")) {
        const int k = view.integer_or("top_k", 0);
        if (k < 1) fail(view.child_path("top_k"), "must be >= 1");
        spec.top_k = k;
    }
    if (view.has("nucleus_p")) {
        const double p = view.number("nucleus_p");
        if (!(p > 0.0) || p > 1.0) fail(view.child_path("nucleus_p"), "must lie in (0, 1]");
        spec.nucleus_p = p;
    }
    if (spec.top_k && spec.nucleus_p) {
        fail(view.path(), "at most one of top_k / nucleus_p may be set");
    }
    return spec;
}

CostModel parse_cost(const ObjectView& view) {
    view.reject_unknown(
        {"t_draft_token", "t_verify_round", "t_target_step", "t_overhead_stop_check", "ratio",
         "preset"});
    CostModel cost;
    cost.t_verify_round = view.number_or("t_verify_round", 1.0);
    if (!(cost.t_verify_round > 0.0)) fail(view.child_path("t_verify_round"), "must be > 0");

    int draft_cost_sources = 0;
    draft_cost_sources += view.has("t_draft_token") ? 1 : 0;
    draft_cost_sources += view.has("ratio") ? 1 : 0;
    draft_cost_sources += view.has("preset") ? 1 : 0;
    if (draft_cost_sources > 1) {
        fail(view.path(), "set at most one of t_draft_token / ratio / preset");
    }
    if (view.has("t_draft_token")) {
        cost.t_draft_token = view.number("t_draft_token");
        if (cost.t_draft_token < 0.0) fail(view.child_path("t_draft_token"), "must be >= 0");
    } else if (view.has("ratio")) {
        const double ratio = view.number("ratio");
        if (!(ratio > 0.0)) fail(view.child_path("ratio"), "must be > 0");
        cost.t_draft_token = cost.t_verify_round / ratio;
    } else if (view.has("preset")) {
        const std::string name = view.string("preset");
        const auto& presets = cost_ratio_presets();
        const auto it = std::find_if(presets.begin(), presets.end(),
                                     [&](const auto& p) { return p.first == name; });
        if (it == presets.end()) {
            std::string known;
            for (const auto& p : presets) known += (known.empty() ? "" : ", ") + p.first;
            fail(view.child_path("preset"), "unknown preset '" + name + "' (known: " + known + ")");
        }
        cost.t_draft_token = cost.t_verify_round / it->second;
    }

    if (view.has("t_target_step")) {
        const double t = view.number("t_target_step");
        if (t < 0.0) fail(view.child_path("t_target_step"), "must be >= 0");
        cost.t_target_step = t;
    }
    cost.t_overhead_stop_check = view.number_or("t_overhead_stop_check", 0.0);
    if (cost.t_overhead_stop_check < 0.0) {
        fail(view.child_path("t_overhead_stop_check"), "must be >= 0");
    }
    return cost;
}

PolicyConfig parse_policy(const std::optional<ObjectView>& maybe_view, Method method) {
    PolicyConfig policy;
    switch (method) {
        case Method::autoregressive:
        case Method::base_spd: policy.kind = PolicyKind::static_length; break;
        case Method::max_confidence_spd: policy.kind = PolicyKind::max_confidence; break;
        case Method::adaedl: policy.kind = PolicyKind::adaedl; break;
    }
    // The threshold controller is on by default for the methods that have a
    // threshold.
    const bool threshold_method = policy.kind != PolicyKind::static_length;
    policy.dynamic_lambda = threshold_method;

    if (!maybe_view) return policy;
    const ObjectView& view = *maybe_view;
    view.reject_unknown({"max_draft_length", "gamma", "initial_lambda", "dynamic_lambda",
                         "entropy_source", "alpha", "epsilon", "beta1", "beta2",
                         "compare_accepted_to_drafted", "persist_controller_across_prompts"});

    policy.max_draft_length = view.integer_or("max_draft_length", policy.max_draft_length);
    if (policy.max_draft_length < 1) fail(view.child_path("max_draft_length"), "must be >= 1");
    policy.gamma = view.number_or("gamma", policy.gamma);
    if (!(policy.gamma > 0.0)) fail(view.child_path("gamma"), "must be > 0");
    policy.initial_lambda = view.number_or("initial_lambda", policy.initial_lambda);
    if (policy.initial_lambda < 0.0 || policy.initial_lambda > 1.0) {
        fail(view.child_path("initial_lambda"), "must lie in [0, 1]");
    }
    policy.dynamic_lambda = view.boolean_or("dynamic_lambda", policy.dynamic_lambda);
    if (method == Method::base_spd && policy.dynamic_lambda) {
        fail(view.child_path("dynamic_lambda"),
             "base-spd uses a static draft length; dynamic_lambda must be false");
    }
    if (method == Method::autoregressive) policy.dynamic_lambda = false;

    if (view.has("entropy_source")) {
        const std::string source = view.string("entropy_source");
        if (source == "raw") {
            policy.entropy_source = EntropySource::raw;
        } else if (source == "adjusted") {
            policy.entropy_source = EntropySource::adjusted;
        } else {
            fail(view.child_path("entropy_source"), "expected \"raw\" or \"adjusted\"");
        }
    }

    policy.alpha = view.number_or("alpha", policy.alpha);
    policy.epsilon = view.number_or("epsilon", policy.epsilon);
    policy.beta1 = view.number_or("beta1", policy.beta1);
    policy.beta2 = view.number_or("beta2", policy.beta2);
    for (auto [value, key] : {std::pair{policy.alpha, "alpha"}, {policy.epsilon, "epsilon"},
                              {policy.beta1, "beta1"}, {policy.beta2, "beta2"}}) {
        if (value < 0.0 || value > 1.0) fail(view.child_path(key), "must lie in [0, 1]");
    }
    policy.compare_accepted_to_drafted = view.boolean_or("compare_accepted_to_drafted", false);
    policy.persist_controller_across_prompts =
        view.boolean_or("persist_controller_across_prompts", false);
    return policy;
}

TargetSpec parse_target(const ObjectView& view) {
    view.reject_unknown({"file", "generate"});
    TargetSpec spec;
    if (view.has("file")) spec.file = view.string("file");
    if (const auto gen_view = view.maybe_object("generate")) {
        gen_view->reject_unknown({"vocab_size", "order", "concentration", "seed"});
        GeneratorSpec gen;
        gen.vocab_size = gen_view->integer_or("vocab_size", gen.vocab_size);
        if (gen.vocab_size < 2) fail(gen_view->child_path("vocab_size"), "must be >= 2");
        gen.order = gen_view->integer_or("order", gen.order);
        if (gen.order < 0) fail(gen_view->child_path("order"), "must be >= 0");
        gen.concentration = gen_view->number_or("concentration", gen.concentration);
        if (!(gen.concentration > 0.0)) fail(gen_view->child_path("concentration"), "must be > 0");
        gen.seed = gen_view->u64_or("seed", gen.seed);
        spec.generate = gen;
    }
    if (spec.file.has_value() == spec.generate.has_value()) {
        fail(view.path(), "exactly one of file / generate is required");
    }
    return spec;
}

DraftSpec parse_draft(const ObjectView& view) {
    view.reject_unknown({"file", "derive"});
    DraftSpec spec;
    if (view.has("file")) spec.file = view.string("file");
    if (const auto derive_view = view.maybe_object("derive")) {
        derive_view->reject_unknown({"mode", "strength", "seed"});
        DerivedDraftSpec derive;
        try {
            derive.mode = draft_mode_from_string(derive_view->string("mode"));
        } catch (const std::invalid_argument& e) {
            fail(derive_view->child_path("mode"), e.what());
        }
        derive.strength = derive_view->number_or("strength", 0.0);
        if (!(derive.strength >= 0.0) || derive.strength > 1.0) {
            fail(derive_view->child_path("strength"), "must lie in [0, 1]");
        }
        derive.seed = derive_view->u64_or("seed", 0);
        spec.derive = derive;
    }
    if (spec.file && spec.derive) {
        fail(view.path(), "set at most one of file / derive");
    }
    return spec;
}

ExperimentConfig parse_experiment_json(const json& root_json) {
    ObjectView root(root_json, "");
    root.reject_unknown({"schema_version", "config_id", "method", "target", "draft", "policy",
                         "adjustment", "cost", "prompts", "generation_length", "run_seed",
                         "output_dir"});

    ExperimentConfig config;
    config.schema_version = root.integer_or("schema_version", 1);
    if (config.schema_version != 1) {
        fail(root.child_path("schema_version"), "unsupported schema version " +
                                                    std::to_string(config.schema_version));
    }
    config.config_id = root.string_or("config_id", "run");
    if (config.config_id.empty()) fail(root.child_path("config_id"), "must not be empty");

    try {
        config.method = method_from_string(root.string("method"));
    } catch (const std::invalid_argument& e) {
        fail(root.child_path("method"), e.what());
    }

    if (const auto target_view = root.maybe_object("target")) {
        config.target = parse_target(*target_view);
    } else {
        fail(root.child_path("target"), "missing required field");
    }

    if (const auto draft_view = root.maybe_object("draft")) {
        config.draft = parse_draft(*draft_view);
    }
    if (config.method != Method::autoregressive && config.draft.empty()) {
        fail(root.child_path("draft"), "required for speculative methods");
    }

    config.policy = parse_policy(root.maybe_object("policy"), config.method);
    if (const auto adj_view = root.maybe_object("adjustment")) {
        config.adjustment = parse_adjustment(*adj_view);
    }
    if (const auto cost_view = root.maybe_object("cost")) {
        config.cost = parse_cost(*cost_view);
    }

    if (const auto prompt_view = root.maybe_object("prompts")) {
        prompt_view->reject_unknown({"count", "length", "seed"});
        config.prompts.count = prompt_view->integer_or("count", config.prompts.count);
        if (config.prompts.count < 1) fail(prompt_view->child_path("count"), "must be >= 1");
        config.prompts.length = prompt_view->integer_or("length", config.prompts.length);
        if (config.prompts.length < 0) fail(prompt_view->child_path("length"), "must be >= 0");
        config.prompts.seed = prompt_view->u64_or("seed", config.prompts.seed);
    }

    config.generation_length = root.integer_or("generation_length", config.generation_length);
    if (config.generation_length < 1) fail(root.child_path("generation_length"), "must be >= 1");
    config.run_seed = root.u64_or("run_seed", 0);
    if (root.has("output_dir")) config.output_dir = root.string("output_dir");

    return config;
}

json emit_experiment_json(const ExperimentConfig& config) {
    json j;
    j["schema_version"] = config.schema_version;
    j["config_id"] = config.config_id;
    j["method"] = to_string(config.method);

    json target;
    if (config.target.file) target["file"] = *config.target.file;
    if (config.target.generate) {
        target["generate"] = {{"vocab_size", config.target.generate->vocab_size},
                              {"order", config.target.generate->order},
                              {"concentration", config.target.generate->concentration},
                              {"seed", config.target.generate->seed}};
    }
    j["target"] = target;

    if (!config.draft.empty()) {
        json draft;
        if (config.draft.file) draft["file"] = *config.draft.file;
        if (config.draft.derive) {
            draft["derive"] = {{"mode", to_string(config.draft.derive->mode)},
                               {"strength", config.draft.derive->strength},
                               {"seed", config.draft.derive->seed}};
        }
        j["draft"] = draft;
    }

    json policy;
    policy["max_draft_length"] = config.policy.max_draft_length;
    policy["gamma"] = config.policy.gamma;
    policy["initial_lambda"] = config.policy.initial_lambda;
    policy["dynamic_lambda"] = config.policy.dynamic_lambda;
    policy["entropy_source"] = to_string(config.policy.entropy_source);
    policy["alpha"] = config.policy.alpha;
    policy["epsilon"] = config.policy.epsilon;
    policy["beta1"] = config.policy.beta1;
    policy["beta2"] = config.policy.beta2;
    policy["compare_accepted_to_drafted"] = config.policy.compare_accepted_to_drafted;
    policy["persist_controller_across_prompts"] = config.policy.persist_controller_across_prompts;
    j["policy"] = policy;

    json adjustment;
    adjustment["temperature"] = config.adjustment.temperature;
    if (config.adjustment.top_k) adjustment["top_k"] = *config.adjustment.top_k;
    if (config.adjustment.nucleus_p) adjustment["nucleus_p"] = *config.adjustment.nucleus_p;
    j["adjustment"] = adjustment;

    json cost;
    cost["t_draft_token"] = config.cost.t_draft_token;
    cost["t_verify_round"] = config.cost.t_verify_round;
    if (config.cost.t_target_step) cost["t_target_step"] = *config.cost.t_target_step;
    cost["t_overhead_stop_check"] = config.cost.t_overhead_stop_check;
    j["cost"] = cost;

    j["prompts"] = {{"count", config.prompts.count},
                    {"length", config.prompts.length},
                    {"seed", config.prompts.seed}};
    j["generation_length"] = config.generation_length;
    j["run_seed"] = config.run_seed;
    if (config.output_dir) j["output_dir"] = *config.output_dir;
    return j;
}

void set_dot_path(json& root, const std::string& dot_path, const json& value) {
    json* node = &root;
    size_t begin = 0;
    for (;;) {
        const size_t dot = dot_path.find('.', begin);
        const std::string key = dot_path.substr(begin, dot - begin);
        if (key.empty()) fail("/axes", "bad axis path '" + dot_path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        json& next = (*node)[key];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) {
            fail("/axes", "axis path '" + dot_path + "' walks through a non-object field");
        }
        node = &next;
        begin = dot + 1;
    }
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::autoregressive: return "autoregressive";
        case Method::base_spd: return "base-spd";
        case Method::max_confidence_spd: return "max-confidence-spd";
        case Method::adaedl: return "adaedl";
    }
    throw std::logic_error("unreachable method");
}

Method method_from_string(const std::string& s) {
    if (s == "autoregressive") return Method::autoregressive;
    if (s == "base-spd") return Method::base_spd;
    if (s == "max-confidence-spd") return Method::max_confidence_spd;
    if (s == "adaedl") return Method::adaedl;
    throw std::invalid_argument(
        "unknown method '" + s +
        "' (expected autoregressive, base-spd, max-confidence-spd, or adaedl)");
}

const std::vector<std::pair<std::string, double>>& cost_ratio_presets() {
    static const std::vector<std::pair<std::string, double>> presets = {
        {"llama2-7b:drafter-115m", 7000.0 / 115.0},
        {"llama2-7b:tinyllama-1b", 7.0},
        {"pythia-6.9b:pythia-1b", 6.9},
        {"pythia-6.9b:pythia-410m", 6900.0 / 410.0},
        {"pythia-6.9b:pythia-160m", 6900.0 / 160.0},
        {"pythia-6.9b:pythia-70m", 6900.0 / 70.0},
    };
    return presets;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    return parse_experiment_json(parse_json_text(json_text, "invalid JSON"));
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_config(buffer.str());
}

std::string emit_experiment_config(const ExperimentConfig& config) {
    return emit_experiment_json(config).dump(2) + "\n";
}

SweepSpec parse_sweep_spec(const std::string& json_text) {
    const json root_json = parse_json_text(json_text, "invalid JSON");
    ObjectView root(root_json, "");
    root.reject_unknown({"schema_version", "base", "axes", "cap"});

    const int schema_version = root.integer_or("schema_version", 1);
    if (schema_version != 1) {
        fail(root.child_path("schema_version"),
             "unsupported schema version " + std::to_string(schema_version));
    }

    SweepSpec spec;
    if (!root.has("base")) fail(root.child_path("base"), "missing required field");
    try {
        parse_experiment_json(root.raw("base"));  // catch base errors up front
    } catch (const ConfigError& e) {
        fail("/base" + e.path(), e.what());
    }
    spec.base_json = root.raw("base").dump();

    if (root.has("axes")) {
        const json& axes = root.raw("axes");
        if (!axes.is_object()) fail(root.child_path("axes"), "expected an object");
        for (auto it = axes.begin(); it != axes.end(); ++it) {
            const std::string axis_path = "/axes/" + it.key();
            if (!it.value().is_array() || it.value().empty()) {
                fail(axis_path, "expected a non-empty array of values");
            }
            SweepAxis axis;
            axis.path = it.key();
            for (const json& v : it.value()) {
                if (!v.is_primitive() || v.is_null()) {
                    fail(axis_path, "axis values must be scalars");
                }
                axis.values.push_back(v.dump());
            }
            spec.axes.push_back(std::move(axis));
        }
        std::sort(spec.axes.begin(), spec.axes.end(),
                  [](const SweepAxis& a, const SweepAxis& b) { return a.path < b.path; });
    }

    if (root.has("cap")) {
        const int cap = root.integer_or("cap", 0);
        if (cap < 1) fail(root.child_path("cap"), "must be >= 1");
        spec.cap = static_cast<size_t>(cap);
    }
    return spec;
}

SweepSpec load_sweep_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sweep file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_sweep_spec(buffer.str());
}

std::vector<ExperimentConfig> expand_sweep(const SweepSpec& spec) {
    size_t n_points = 1;
    for (const SweepAxis& axis : spec.axes) {
        if (axis.values.empty()) fail("/axes/" + axis.path, "axis has no values");
        if (n_points > spec.cap / axis.values.size()) {
            fail("/axes", "cross product exceeds the cap of " + std::to_string(spec.cap) +
                              " points");
        }
        n_points *= axis.values.size();
    }
    if (n_points > spec.cap) {
        fail("/axes", "cross product of " + std::to_string(n_points) +
                          " points exceeds the cap of " + std::to_string(spec.cap));
    }

    const json base = parse_json_text(spec.base_json, "invalid base config");
    const std::string base_id = base.contains("config_id")
                                    ? base["config_id"].get<std::string>()
                                    : std::string("run");

    std::vector<ExperimentConfig> points;
    points.reserve(n_points);
    for (size_t index = 0; index < n_points; ++index) {
        json point = base;
        size_t radix = index;
        for (size_t a = spec.axes.size(); a-- > 0;) {  // last axis fastest
            const SweepAxis& axis = spec.axes[a];
            const size_t pick = radix % axis.values.size();
            radix /= axis.values.size();
            set_dot_path(point, axis.path, json::parse(axis.values[pick]));
        }
        if (!spec.axes.empty()) {
            char suffix[24];
            std::snprintf(suffix, sizeof(suffix), "-p%04zu", index);
            point["config_id"] = base_id + suffix;
        }
        points.push_back(parse_experiment_json(point));
    }
    return points;
}

std::vector<std::vector<int>> build_prompt_corpus(const PromptSpec& spec, int vocab_size) {
    std::vector<std::vector<int>> prompts;
    prompts.reserve(static_cast<size_t>(spec.count));
    RngState root(spec.seed);
    for (int i = 0; i < spec.count; ++i) {
        RngState rng = root.split(static_cast<uint64_t>(i));
        std::vector<int> prompt(static_cast<size_t>(spec.length));
        for (int& tok : prompt) tok = rng.next_below(vocab_size);
        prompts.push_back(std::move(prompt));
    }
    return prompts;
}

}  // namespace specsim
