#pragma once

#include "groupforge/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace groupforge {

// Parses a JSON config file into a resolved TrainConfig: schedule-level
// learning rate and temperature flow into stages that do not override
// them. Throws ConfigError listing every violation, not only the first.
TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig train_config_from_json_text(const std::string& text);

// Resolved-config snapshot as JSON text (the manifest embeds it).
std::string train_config_to_json_text(const TrainConfig& cfg);

// Collects constraint violations without throwing; empty means valid.
std::vector<std::string> validate_train_config(const TrainConfig& cfg);

// When GROUPFORGE_SEED is set, every stage seed (and the warmup seed) is
// replaced with its value.
void apply_seed_override(TrainConfig& cfg);

struct RunManifest {
    std::string tool_version;
    std::uint64_t seed = 0;  // stage-1 seed after overrides
    std::string config_json;
    std::vector<std::string> artifact_paths;
    std::string start_time;  // ISO-8601; not part of determinism comparisons
};

// Written before the first update; immutable afterwards.
void write_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace groupforge
