#include "groupforge/trainer.hpp"

#include "groupforge/checkpoint.hpp"
#include "groupforge/verifier.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace groupforge {

namespace {

using nlohmann::json;

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

// Rolls out one group against the rollout-time snapshot: G samples, their
// log-probs under pi_old, reward breakdowns and the correct count.
RolloutGroup rollout_group(const PolicySnapshot& pi_old, const PromptRecord& prompt,
                           const AnswerExpr& reference, const StageConfig& stage,
                           std::uint64_t round_counter) {
    RolloutGroup group;
    group.prompt = prompt;
    Rng rng(mix_seed(mix_seed(stage.seed, fnv1a64(prompt.id)), round_counter));
    for (int i = 0; i < stage.grpo.group_size; ++i) {
        Response y = sample_response(pi_old, prompt, stage.temperature, rng);
        group.old_log_probs.push_back(log_probs(pi_old, prompt, y));
        group.rewards.push_back(total_reward(y.text, reference, stage.strict_think));
        group.responses.push_back(std::move(y));
    }
    group.accuracy_count = accuracy_count(group, stage.filter.count_mode);
    return group;
}

struct BatchStats {
    double mean_accuracy = 0.0;
    double mean_total = 0.0;
    double mean_len = 0.0;
};

BatchStats batch_reward_stats(const std::vector<RolloutGroup>& batch) {
    BatchStats s;
    std::size_t n = 0;
    for (const RolloutGroup& g : batch) {
        for (std::size_t i = 0; i < g.responses.size(); ++i) {
            s.mean_accuracy += g.rewards[i].accuracy;
            s.mean_total += g.rewards[i].total;
            s.mean_len += static_cast<double>(g.responses[i].length());
            ++n;
        }
    }
    if (n > 0) {
        s.mean_accuracy /= static_cast<double>(n);
        s.mean_total /= static_cast<double>(n);
        s.mean_len /= static_cast<double>(n);
    }
    return s;
}

// Runs fn(i) for i in [0, n) over `threads` workers; results land in
// index-order slots so the reduction below stays deterministic.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::mutex error_mu;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

json metrics_to_json(const MetricsRecord& m) {
    json j;
    j["update_index"] = m.update_index;
    j["mean_accuracy"] = m.mean_accuracy;
    j["mean_total_reward"] = m.mean_total_reward;
    j["mean_response_len"] = m.mean_response_len;
    j["mean_ratio"] = m.mean_ratio;
    j["max_ratio"] = m.max_ratio;
    j["clip_fraction"] = m.clip_fraction;
    j["clamp_fraction"] = m.clamp_fraction;
    j["mean_kl"] = m.mean_kl;
    j["loss"] = m.loss;
    j["buffered_groups"] = m.buffered_groups;
    j["groups_rolled_out"] = m.groups_rolled_out;
    j["groups_admitted"] = m.groups_admitted;
    j["filtered_all_correct"] = m.filtered_all_correct;
    j["filtered_all_wrong"] = m.filtered_all_wrong;
    j["filtered_other"] = m.filtered_other;
    return j;
}

MetricsRecord metrics_from_json(const json& j) {
    MetricsRecord m;
    m.update_index = j.at("update_index").get<int>();
    m.mean_accuracy = j.at("mean_accuracy").get<double>();
    m.mean_total_reward = j.at("mean_total_reward").get<double>();
    m.mean_response_len = j.at("mean_response_len").get<double>();
    m.mean_ratio = j.at("mean_ratio").get<double>();
    m.max_ratio = j.at("max_ratio").get<double>();
    m.clip_fraction = j.at("clip_fraction").get<double>();
    m.clamp_fraction = j.at("clamp_fraction").get<double>();
    m.mean_kl = j.at("mean_kl").get<double>();
    m.loss = j.at("loss").get<double>();
    m.buffered_groups = j.at("buffered_groups").get<std::uint64_t>();
    m.groups_rolled_out = j.at("groups_rolled_out").get<std::uint64_t>();
    m.groups_admitted = j.at("groups_admitted").get<std::uint64_t>();
    m.filtered_all_correct = j.at("filtered_all_correct").get<std::uint64_t>();
    m.filtered_all_wrong = j.at("filtered_all_wrong").get<std::uint64_t>();
    m.filtered_other = j.at("filtered_other").get<std::uint64_t>();
    return m;
}

void sft_pass(PolicyModel& policy,
              const std::vector<std::pair<const PromptRecord*, Response>>& targets, int epochs,
              double lr) {
    if (targets.empty()) throw DatasetError("no SFT targets");
    const double inv_n = 1.0 / static_cast<double>(targets.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        ParamGradient grad = policy.zero_gradient();
        for (const auto& [record, target] : targets) {
            const double w = -inv_n / static_cast<double>(target.tokens.size());
            std::vector<double> weights(target.tokens.size(), w);
            grad.add_scaled(policy.grad_weighted_logprob(*record, target, weights), 1.0);
        }
        apply_update(policy, grad, lr);
    }
}

}  // namespace

PolicyModel PolicySpec::build() const {
    if (kind == PolicyKind::Tabular) return PolicyModel::make_tabular(max_response_len);
    return PolicyModel::make_mlp(dims, init_seed, max_response_len);
}

void StageConfig::validate() const {
    grpo.validate();
    filter.validate(grpo.group_size);
    if (dataset_path.empty()) throw ConfigError("stage dataset path required");
    if (kl_coef < 0.0) throw ConfigError("kl_coef must be >= 0");
    if (rollout_batch_size < 1) throw ConfigError("rollout_batch_size must be >= 1");
    if (max_updates < 0) throw ConfigError("max_updates must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (collapse_window < 2) throw ConfigError("collapse_window must be >= 2");
}

void TrainConfig::validate() const {
    if (stages.empty()) throw ConfigError("at least one stage required");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (warmup.epochs < 0) throw ConfigError("warmup epochs must be >= 0");
    for (const StageConfig& s : stages) s.validate();
}

std::string CollapseReport::to_string() const {
    std::ostringstream os;
    os << "collapse (" << reason << ") at update " << update_index << ": max ratio "
       << max_ratio << ", accuracy " << accuracy_start << " -> " << accuracy_now;
    return os.str();
}

std::vector<MetricsRecord> ScheduleResult::concatenated_metrics() const {
    std::vector<MetricsRecord> all;
    for (const StageResult& s : stages) {
        all.insert(all.end(), s.metrics.begin(), s.metrics.end());
    }
    return all;
}

std::optional<CollapseReport> detect_collapse(std::span<const MetricsRecord> window,
                                              double ratio_clamp) {
    if (window.size() < 2) return std::nullopt;
    double max_ratio = 0.0;
    for (const MetricsRecord& m : window) max_ratio = std::max(max_ratio, m.max_ratio);
    const double acc_start = window.front().mean_accuracy;
    const double acc_now = window.back().mean_accuracy;
    if (max_ratio >= ratio_clamp - 0.01 && acc_start > 0.0 && acc_now < 0.5 * acc_start) {
        CollapseReport report;
        report.reason = "ratio-spike";
        report.update_index = window.back().update_index;
        report.max_ratio = max_ratio;
        report.accuracy_start = acc_start;
        report.accuracy_now = acc_now;
        return report;
    }
    return std::nullopt;
}

StageResult run_stage(PolicyModel& policy, const StageConfig& stage, const Dataset& data,
                      int threads, const UpdateHook& hook, int stage_index,
                      const BatchHook& batch_hook) {
    stage.validate();
    if (data.empty()) throw DatasetError("empty dataset");

    // Reference answers parse once up front.
    std::vector<AnswerExpr> references;
    references.reserve(data.size());
    for (const PromptRecord& r : data.records) references.push_back(parse_expr(r.reference_answer));

    GrpoConfig grpo_cfg = stage.grpo;
    grpo_cfg.kl_coef = stage.kl_coef;

    const PolicySnapshot pi_ref = snapshot(policy);
    Buffer buffer(stage.filter);

    StageResult result;
    std::deque<MetricsRecord> window;
    std::uint64_t rolled_out = 0, admitted = 0;
    std::uint64_t all_correct = 0, all_wrong = 0, other_filtered = 0;
    int updates = 0;
    std::uint64_t round_counter = 0;

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::uint64_t pass_index = 0;

    for (int outer = 0; outer < stage.filter.outer_iterations; ++outer) {
        if (updates >= stage.max_updates) break;

        if (cursor >= order.size()) {
            order = shuffled_indices(data.size(), mix_seed(stage.seed ^ 0xd5a1ULL, pass_index));
            cursor = 0;
            ++pass_index;
        }
        const std::size_t batch_n = std::min<std::size_t>(
            static_cast<std::size_t>(stage.rollout_batch_size), order.size() - cursor);
        std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                           order.begin() +
                                               static_cast<std::ptrdiff_t>(cursor + batch_n));
        cursor += batch_n;

        const PolicySnapshot pi_old = snapshot(policy);
        std::vector<RolloutGroup> groups(batch_n);
        parallel_for(batch_n, threads, [&](std::size_t i) {
            const PromptRecord& prompt = data.records[batch_idx[i]];
            groups[i] = rollout_group(pi_old, prompt, references[batch_idx[i]], stage,
                                      round_counter);
        });
        ++round_counter;

        for (RolloutGroup& group : groups) {
            ++rolled_out;
            const bool keep = !stage.filter.enabled || admit(group, stage.filter);
            if (keep) {
                ++admitted;
                buffer.push(std::move(group));
            } else if (group.accuracy_count >= stage.grpo.group_size) {
                ++all_correct;
            } else if (group.accuracy_count <= 0) {
                ++all_wrong;
            } else {
                ++other_filtered;
            }
        }

        auto drained = buffer.try_drain();
        if (!drained) continue;

        std::vector<RolloutGroup>& batch = *drained;
        for (RolloutGroup& g : batch) {
            std::vector<double> totals;
            totals.reserve(g.rewards.size());
            for (const RewardBreakdown& r : g.rewards) totals.push_back(r.total);
            g.advantages = group_advantages(totals);
        }
        if (batch_hook) batch_hook(batch);
        const BatchStats stats = batch_reward_stats(batch);

        for (int epoch = 0; epoch < stage.filter.inner_epochs; ++epoch) {
            if (updates >= stage.max_updates) break;

            const double inv_b = 1.0 / static_cast<double>(batch.size());
            std::vector<std::pair<LossBreakdown, ParamGradient>> parts(batch.size());
            try {
                parallel_for(batch.size(), threads, [&](std::size_t i) {
                    parts[i] = loss_and_grad(batch[i], policy, pi_ref, grpo_cfg);
                });
            } catch (const NumericError&) {
                CollapseReport report;
                report.reason = "numeric-instability";
                report.update_index = updates + 1;
                report.accuracy_start = window.empty() ? 0.0 : window.front().mean_accuracy;
                report.accuracy_now = stats.mean_accuracy;
                result.collapse = report;
                return result;
            }

            ParamGradient grad = policy.zero_gradient();
            LossBreakdown agg;
            for (const auto& [lb, g] : parts) {
                grad.add_scaled(g, inv_b);
                agg.loss += lb.loss * inv_b;
                agg.surrogate += lb.surrogate * inv_b;
                agg.kl_term += lb.kl_term * inv_b;
                agg.kl_estimate += lb.kl_estimate * inv_b;
                agg.mean_ratio += lb.mean_ratio * inv_b;
                agg.max_ratio = std::max(agg.max_ratio, lb.max_ratio);
                agg.clip_fraction += lb.clip_fraction * inv_b;
                agg.clamp_fraction += lb.clamp_fraction * inv_b;
            }

            try {
                apply_update(policy, grad, stage.learning_rate);
            } catch (const NumericError&) {
                CollapseReport report;
                report.reason = "numeric-instability";
                report.update_index = updates + 1;
                report.accuracy_start = window.empty() ? 0.0 : window.front().mean_accuracy;
                report.accuracy_now = stats.mean_accuracy;
                result.collapse = report;
                return result;
            }
            ++updates;

            MetricsRecord m;
            m.update_index = updates;
            m.mean_accuracy = stats.mean_accuracy;
            m.mean_total_reward = stats.mean_total;
            m.mean_response_len = stats.mean_len;
            m.mean_ratio = agg.mean_ratio;
            m.max_ratio = agg.max_ratio;
            m.clip_fraction = agg.clip_fraction;
            m.clamp_fraction = agg.clamp_fraction;
            m.mean_kl = agg.kl_estimate;
            m.loss = agg.loss;
            m.buffered_groups = buffer.size();
            m.groups_rolled_out = rolled_out;
            m.groups_admitted = admitted;
            m.filtered_all_correct = all_correct;
            m.filtered_all_wrong = all_wrong;
            m.filtered_other = other_filtered;
            result.metrics.push_back(m);

            window.push_back(m);
            while (static_cast<int>(window.size()) > stage.collapse_window) window.pop_front();
            std::vector<MetricsRecord> win(window.begin(), window.end());
            if (auto report = detect_collapse(win, stage.grpo.ratio_clamp)) {
                result.collapse = report;
                return result;
            }

            if (hook) hook(stage_index, updates, policy);
        }
    }
    return result;
}

StageResult run_stage(PolicyModel& policy, const StageConfig& stage) {
    Dataset data = load_dataset(stage.dataset_path);
    return run_stage(policy, stage, data, 1, nullptr, 0);
}

ScheduleResult run_schedule(PolicyModel& policy, const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir,
                            const UpdateHook& hook) {
    cfg.validate();
    ScheduleResult result;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
        const StageConfig& stage = cfg.stages[s];
        Dataset data = load_dataset(stage.dataset_path);
        StageResult stage_result =
            run_stage(policy, stage, data, cfg.threads, hook, static_cast<int>(s));
        const bool collapsed = stage_result.collapse.has_value();
        result.stages.push_back(std::move(stage_result));
        if (out_dir) {
            save_policy(policy, *out_dir / ("checkpoint_stage" + std::to_string(s + 1) + ".json"));
        }
        if (collapsed) {
            result.aborted_stage = static_cast<int>(s);
            break;
        }
    }
    return result;
}

std::vector<TokenId> sft_target_tokens(const PromptRecord& r, SftMode mode) {
    const Vocabulary& vocab = Vocabulary::instance();
    std::vector<TokenId> tokens;
    if (mode == SftMode::CotSolution) {
        tokens.push_back(Vocabulary::kThinkOpen);
        std::vector<TokenId> sol = vocab.encode(r.solution.value());
        tokens.insert(tokens.end(), sol.begin(), sol.end());
        tokens.push_back(Vocabulary::kThinkClose);
    }
    tokens.push_back(Vocabulary::kAnswerOpen);
    tokens.push_back(Vocabulary::kBoxedOpen);
    std::vector<TokenId> ans = vocab.encode(r.reference_answer);
    tokens.insert(tokens.end(), ans.begin(), ans.end());
    tokens.push_back(Vocabulary::kBoxedClose);
    tokens.push_back(Vocabulary::kAnswerClose);
    tokens.push_back(vocab.eos());
    return tokens;
}

void train_sft(PolicyModel& policy, const Dataset& data, int epochs, double lr, SftMode mode) {
    if (data.empty()) throw DatasetError("empty dataset");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (epochs == 0) return;

    if (mode == SftMode::CotSolution) {
        std::string missing;
        for (const PromptRecord& r : data.records) {
            if (!r.solution) missing += missing.empty() ? r.id : ", " + r.id;
        }
        if (!missing.empty()) {
            throw DatasetError("records missing solutions for COT SFT: " + missing);
        }
    }

    std::vector<std::pair<const PromptRecord*, Response>> targets;
    targets.reserve(data.size());
    for (const PromptRecord& r : data.records) {
        targets.emplace_back(&r, Response::from_tokens(sft_target_tokens(r, mode)));
    }
    sft_pass(policy, targets, epochs, lr);
}

void format_warmup(PolicyModel& policy, const Dataset& data, const WarmupConfig& warmup) {
    if (warmup.epochs <= 0) return;
    if (data.empty()) throw DatasetError("empty dataset");

    const Vocabulary& vocab = Vocabulary::instance();
    std::vector<std::pair<const PromptRecord*, Response>> targets;
    targets.reserve(data.size());
    for (const PromptRecord& r : data.records) {
        Rng rng(mix_seed(warmup.seed, fnv1a64(r.id)));
        TokenId digit = static_cast<TokenId>(rng.bounded(10));
        std::vector<TokenId> tokens = {Vocabulary::kAnswerOpen, Vocabulary::kBoxedOpen, digit,
                                       Vocabulary::kBoxedClose, Vocabulary::kAnswerClose,
                                       vocab.eos()};
        targets.emplace_back(&r, Response::from_tokens(std::move(tokens)));
    }
    sft_pass(policy, targets, warmup.epochs, warmup.learning_rate);
}

void save_metrics(const std::vector<MetricsRecord>& records,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open metrics log for writing: " + path.string());
    for (const MetricsRecord& m : records) out << metrics_to_json(m).dump() << "\n";
    if (!out) throw DatasetError("metrics write failed: " + path.string());
}

std::vector<MetricsRecord> load_metrics(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open metrics log: " + path.string());
    std::vector<MetricsRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(metrics_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DatasetError("metrics parse error at line " + std::to_string(line_no) + ": " +
                               e.what());
        }
    }
    return records;
}

}  // namespace groupforge
