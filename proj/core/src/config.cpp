#include "groupforge/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace groupforge {

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

PolicySpec policy_from_json(const json& j) {
    PolicySpec spec;
    std::string kind = j.value("kind", "tabular");
    if (kind == "tabular") {
        spec.kind = PolicyKind::Tabular;
    } else if (kind == "mlp") {
        spec.kind = PolicyKind::Mlp;
    } else {
        throw ConfigError("policy.kind must be \"tabular\" or \"mlp\"");
    }
    spec.max_response_len = j.value("max_response_len", 24);
    spec.dims.context = j.value("context", 4);
    spec.dims.embed = j.value("embed", 16);
    spec.dims.hidden = j.value("hidden", 32);
    spec.init_seed = j.value("init_seed", std::uint64_t{0});
    return spec;
}

json policy_to_json(const PolicySpec& spec) {
    json j;
    j["kind"] = spec.kind == PolicyKind::Tabular ? "tabular" : "mlp";
    j["max_response_len"] = spec.max_response_len;
    j["context"] = spec.dims.context;
    j["embed"] = spec.dims.embed;
    j["hidden"] = spec.dims.hidden;
    j["init_seed"] = spec.init_seed;
    return j;
}

StageConfig stage_from_json(const json& j, const TrainConfig& defaults) {
    StageConfig s;
    s.dataset_path = j.value("dataset", "");
    s.kl_coef = j.value("kl_coef", 0.0);
    s.rollout_batch_size = j.value("rollout_batch_size", 32);
    s.max_updates = j.value("max_updates", 500);
    s.seed = j.value("seed", std::uint64_t{0});
    s.learning_rate = j.value("learning_rate", defaults.learning_rate);
    s.temperature = j.value("temperature", defaults.temperature);
    s.collapse_window = j.value("collapse_window", 8);
    s.strict_think = j.value("strict_think", false);

    if (j.contains("grpo")) {
        const json& g = j.at("grpo");
        s.grpo.group_size = g.value("group_size", 8);
        s.grpo.clip_epsilon = g.value("clip_epsilon", 0.2);
        s.grpo.ratio_clamp = g.value("ratio_clamp", 3.0);
    }
    s.grpo.kl_coef = s.kl_coef;

    s.filter.upper = s.grpo.group_size - 1;
    if (j.contains("filter")) {
        const json& f = j.at("filter");
        s.filter.enabled = f.value("enabled", true);
        s.filter.lower = f.value("lower", 1);
        s.filter.upper = f.value("upper", s.grpo.group_size - 1);
        s.filter.buffer_size = f.value("buffer_size", s.rollout_batch_size);
        s.filter.inner_epochs = f.value("inner_epochs", 1);
        s.filter.outer_iterations = f.value("outer_iterations", 100000);
        s.filter.carry_overflow = f.value("carry_overflow", false);
        std::string mode = f.value("count_mode", "accuracy");
        if (mode == "accuracy") {
            s.filter.count_mode = CountMode::AccuracyComponent;
        } else if (mode == "total") {
            s.filter.count_mode = CountMode::TotalReward;
        } else {
            throw ConfigError("filter.count_mode must be \"accuracy\" or \"total\"");
        }
    } else {
        s.filter.buffer_size = s.rollout_batch_size;
    }
    return s;
}

json stage_to_json(const StageConfig& s) {
    json j;
    j["dataset"] = s.dataset_path;
    j["kl_coef"] = s.kl_coef;
    j["rollout_batch_size"] = s.rollout_batch_size;
    j["max_updates"] = s.max_updates;
    j["seed"] = s.seed;
    j["learning_rate"] = s.learning_rate;
    j["temperature"] = s.temperature;
    j["collapse_window"] = s.collapse_window;
    j["strict_think"] = s.strict_think;
    j["grpo"] = {{"group_size", s.grpo.group_size},
                 {"clip_epsilon", s.grpo.clip_epsilon},
                 {"ratio_clamp", s.grpo.ratio_clamp}};
    j["filter"] = {
        {"enabled", s.filter.enabled},
        {"lower", s.filter.lower},
        {"upper", s.filter.upper},
        {"buffer_size", s.filter.buffer_size},
        {"inner_epochs", s.filter.inner_epochs},
        {"outer_iterations", s.filter.outer_iterations},
        {"carry_overflow", s.filter.carry_overflow},
        {"count_mode",
         s.filter.count_mode == CountMode::AccuracyComponent ? "accuracy" : "total"}};
    return j;
}

}  // namespace

TrainConfig train_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    TrainConfig cfg;
    try {
        if (j.contains("policy")) cfg.policy = policy_from_json(j.at("policy"));
        cfg.learning_rate = j.value("learning_rate", 0.05);
        cfg.temperature = j.value("temperature", 1.0);
        cfg.eval_cadence = j.value("eval_cadence", 0);
        if (j.contains("eval_dataset") && !j.at("eval_dataset").is_null()) {
            cfg.eval_dataset_path = j.at("eval_dataset").get<std::string>();
        }
        if (j.contains("warmup")) {
            const json& w = j.at("warmup");
            cfg.warmup.epochs = w.value("epochs", 0);
            cfg.warmup.learning_rate = w.value("learning_rate", 0.5);
            cfg.warmup.seed = w.value("seed", std::uint64_t{0});
        }
        cfg.threads = j.value("threads", 1);
        if (!j.contains("stages") || !j.at("stages").is_array()) {
            throw ConfigError("config requires a \"stages\" array");
        }
        for (const json& sj : j.at("stages")) cfg.stages.push_back(stage_from_json(sj, cfg));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return train_config_from_json_text(buf.str());
}

std::string train_config_to_json_text(const TrainConfig& cfg) {
    json j;
    j["policy"] = policy_to_json(cfg.policy);
    j["learning_rate"] = cfg.learning_rate;
    j["temperature"] = cfg.temperature;
    j["eval_cadence"] = cfg.eval_cadence;
    j["eval_dataset"] = cfg.eval_dataset_path.empty() ? json(nullptr) : json(cfg.eval_dataset_path);
    j["warmup"] = {{"epochs", cfg.warmup.epochs},
                   {"learning_rate", cfg.warmup.learning_rate},
                   {"seed", cfg.warmup.seed}};
    j["threads"] = cfg.threads;
    json stages = json::array();
    for (const StageConfig& s : cfg.stages) stages.push_back(stage_to_json(s));
    j["stages"] = std::move(stages);
    return j.dump(2);
}

std::vector<std::string> validate_train_config(const TrainConfig& cfg) {
    std::vector<std::string> violations;
    if (cfg.stages.empty()) violations.push_back("at least one stage required");
    if (!(cfg.learning_rate > 0.0)) violations.push_back("learning_rate must be > 0");
    if (!(cfg.temperature > 0.0)) violations.push_back("temperature must be > 0");
    if (cfg.threads < 1) violations.push_back("threads must be >= 1");
    if (cfg.warmup.epochs < 0) violations.push_back("warmup epochs must be >= 0");
    if (cfg.eval_cadence < 0) violations.push_back("eval_cadence must be >= 0");
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        try {
            cfg.stages[i].validate();
        } catch (const ConfigError& e) {
            violations.push_back("stage " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return violations;
}

void apply_seed_override(TrainConfig& cfg) {
    const char* env = std::getenv("GROUPFORGE_SEED");
    if (!env || *env == '\0') return;
    std::uint64_t seed = 0;
    try {
        seed = std::stoull(env);
    } catch (const std::exception&) {
        throw ConfigError(std::string("GROUPFORGE_SEED is not an integer: ") + env);
    }
    for (StageConfig& s : cfg.stages) s.seed = seed;
    cfg.warmup.seed = seed;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    json j;
    j["tool_version"] = m.tool_version.empty() ? kToolVersion : m.tool_version;
    j["seed"] = m.seed;
    j["config"] = json::parse(m.config_json);
    j["artifacts"] = m.artifact_paths;
    j["start_time"] = m.start_time;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace groupforge
