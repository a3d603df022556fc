#pragma once

#include "groupforge/dataset.hpp"
#include "groupforge/filter.hpp"
#include "groupforge/grpo.hpp"
#include "groupforge/policy.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace groupforge {

struct PolicySpec {
    PolicyKind kind = PolicyKind::Tabular;
    MlpDims dims;
    int max_response_len = 24;
    std::uint64_t init_seed = 0;

    PolicyModel build() const;
};

// Everything one stage needs, fully resolved: schedule-level defaults for
// learning rate and temperature are copied in before the stage runs.
struct StageConfig {
    std::string dataset_path;
    double kl_coef = 0.0;
    GrpoConfig grpo;
    FilterConfig filter;
    int rollout_batch_size = 32;
    int max_updates = 500;
    std::uint64_t seed = 0;
    double learning_rate = 0.05;
    double temperature = 1.0;
    int collapse_window = 8;
    bool strict_think = false;  // format reward demands the <think> block

    void validate() const;
};

// Brief supervised pass on the stage-1 prompts with randomized boxed
// digits: teaches the tagged answer shape without leaking answers, the
// desk-scale stand-in for starting from an instruction-tuned base model.
struct WarmupConfig {
    int epochs = 0;  // 0 disables
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
};

struct TrainConfig {
    PolicySpec policy;
    double learning_rate = 0.05;
    double temperature = 1.0;
    int eval_cadence = 0;             // updates between eval callbacks; 0 = off
    std::string eval_dataset_path;    // optional
    WarmupConfig warmup;
    int threads = 1;
    std::vector<StageConfig> stages;

    void validate() const;
};

// One row per policy update. Counter fields are cumulative within the
// stage. Wall-clock time is tracked separately by the CLI so metrics logs
// stay byte-identical across same-seed runs.
struct MetricsRecord {
    int update_index = 0;
    double mean_accuracy = 0.0;
    double mean_total_reward = 0.0;
    double mean_response_len = 0.0;
    double mean_ratio = 0.0;
    double max_ratio = 0.0;
    double clip_fraction = 0.0;
    double clamp_fraction = 0.0;
    double mean_kl = 0.0;
    double loss = 0.0;
    std::uint64_t buffered_groups = 0;
    std::uint64_t groups_rolled_out = 0;
    std::uint64_t groups_admitted = 0;
    std::uint64_t filtered_all_correct = 0;
    std::uint64_t filtered_all_wrong = 0;
    std::uint64_t filtered_other = 0;
};

struct CollapseReport {
    std::string reason;  // "ratio-spike" or "numeric-instability"
    int update_index = 0;
    double max_ratio = 0.0;
    double accuracy_start = 0.0;
    double accuracy_now = 0.0;

    std::string to_string() const;
};

struct StageResult {
    std::vector<MetricsRecord> metrics;
    std::optional<CollapseReport> collapse;
};

struct ScheduleResult {
    std::vector<StageResult> stages;
    std::optional<int> aborted_stage;  // index of the stage that collapsed

    bool collapsed() const { return aborted_stage.has_value(); }
    std::vector<MetricsRecord> concatenated_metrics() const;
};

using UpdateHook = std::function<void(int stage_index, int update_index, const PolicyModel&)>;

// Observes every drained batch before its optimisation epochs; test and
// metrics instrumentation.
using BatchHook = std::function<void(const std::vector<RolloutGroup>& batch)>;

// Runs Algorithm 1 for one stage: rollout rounds against a fresh pi_old
// snapshot, reward scoring, admission filtering, buffer drains of
// buffer_size groups optimized for inner_epochs epochs against the
// stage-start reference snapshot. Deterministic given the seed. A tripped
// collapse detector or numeric instability ends the stage with a report
// instead of continuing.
StageResult run_stage(PolicyModel& policy, const StageConfig& stage, const Dataset& data,
                      int threads = 1, const UpdateHook& hook = nullptr, int stage_index = 0,
                      const BatchHook& batch_hook = nullptr);
StageResult run_stage(PolicyModel& policy, const StageConfig& stage);

// Stages in order, policy threaded through, reference re-anchored at each
// stage boundary. Checkpoints are written per stage when out_dir is given.
ScheduleResult run_schedule(PolicyModel& policy, const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                            const UpdateHook& hook = nullptr);

enum class SftMode { AnswerOnly, CotSolution };

// Full-batch cross-entropy descent on canonical targets built from the
// reference answers (plus solutions in COT mode).
void train_sft(PolicyModel& policy, const Dataset& data, int epochs, double lr,
               SftMode mode = SftMode::AnswerOnly);

void format_warmup(PolicyModel& policy, const Dataset& data, const WarmupConfig& warmup);

// Canonical target token sequence for a record; exposed for tests.
std::vector<TokenId> sft_target_tokens(const PromptRecord& r, SftMode mode);

// Warning when the window has ratios at the clamp and the accuracy reward
// halved from window start; both conditions required.
std::optional<CollapseReport> detect_collapse(std::span<const MetricsRecord> window,
                                              double ratio_clamp);

// Metrics log IO: JSON Lines, one record per line, deterministic field
// order.
void save_metrics(const std::vector<MetricsRecord>& records, const std::filesystem::path& path);
std::vector<MetricsRecord> load_metrics(const std::filesystem::path& path);

}  // namespace groupforge
