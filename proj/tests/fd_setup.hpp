#pragma once

// Random (policy, rollout group) configurations for finite-difference
// gradient checks, with rejection sampling away from the clip/clamp kinks
// where central differences are invalid.

#include "groupforge/grpo.hpp"
#include "test_utils.hpp"

#include <cmath>

namespace gftest {

struct FdSetup {
    groupforge::PolicyModel policy;
    groupforge::PolicySnapshot ref;
    groupforge::RolloutGroup group;
};

inline FdSetup make_fd_setup(groupforge::Rng& rng, groupforge::PolicyKind kind, int g_count,
                             double kink_margin, const groupforge::GrpoConfig& cfg) {
    using namespace groupforge;
    for (;;) {
        FdSetup s;
        PromptRecord prompt = make_prompt();
        s.group.prompt = prompt;

        PolicyModel base = kind == PolicyKind::Tabular
                               ? PolicyModel::make_tabular()
                               : PolicyModel::make_mlp(MlpDims{2, 3, 4}, rng.next_u64());
        PolicyModel old_policy = base;
        PolicyModel ref_policy = base;

        std::vector<Response> responses;
        for (int i = 0; i < g_count; ++i) {
            std::size_t len = 1 + rng.bounded(3);
            std::vector<TokenId> ids;
            for (std::size_t t = 0; t < len; ++t) {
                ids.push_back(static_cast<TokenId>(rng.bounded(24)));
            }
            responses.push_back(Response::from_tokens(std::move(ids)));
        }

        auto perturb = [&rng](PolicyModel& m, const PromptRecord& pr,
                              const std::vector<Response>& rs, double scale) {
            if (m.kind == PolicyKind::Tabular) {
                for (const Response& y : rs) {
                    std::vector<double> w(y.tokens.size(), 1.0);
                    ParamGradient g = m.grad_weighted_logprob(pr, y, w);
                    for (const auto& [key, row] : g.table) {
                        std::vector<double>& dst = m.table[key];
                        if (dst.empty()) dst.assign(row.size(), 0.0);
                        for (double& x : dst) x += scale * (2.0 * rng.next_double() - 1.0);
                    }
                }
            } else {
                for (std::vector<double>* arr : {&m.embed, &m.w1, &m.b1, &m.w2, &m.b2}) {
                    for (double& x : *arr) x += scale * (2.0 * rng.next_double() - 1.0);
                }
            }
        };
        s.policy = base;
        perturb(s.policy, prompt, responses, 0.4);
        perturb(old_policy, prompt, responses, 0.4);
        perturb(ref_policy, prompt, responses, 0.4);
        s.ref = snapshot(ref_policy);

        std::vector<double> totals;
        for (int i = 0; i < g_count; ++i) {
            double t = 0.5 * static_cast<double>(rng.bounded(4));
            totals.push_back(t);
            RewardBreakdown r;
            r.accuracy = t >= 1.0 ? 1.0 : 0.0;
            r.format = 0.0;
            r.total = t;
            s.group.rewards.push_back(r);
        }
        double mean = 0.0;
        for (double t : totals) mean += t;
        mean /= static_cast<double>(totals.size());
        double var = 0.0;
        for (double t : totals) var += (t - mean) * (t - mean);
        if (var == 0.0) continue;  // degenerate group, redraw

        for (const Response& y : responses) {
            s.group.old_log_probs.push_back(log_probs(old_policy, prompt, y));
        }
        s.group.responses = responses;
        s.group.advantages = group_advantages(totals);

        bool near_kink = false;
        for (int i = 0; i < g_count && !near_kink; ++i) {
            std::vector<double> lp_new =
                log_probs(s.policy, prompt, responses[static_cast<std::size_t>(i)]);
            for (std::size_t t = 0; t < lp_new.size(); ++t) {
                double ratio = std::exp(
                    lp_new[t] - s.group.old_log_probs[static_cast<std::size_t>(i)][t]);
                for (double edge :
                     {1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon, cfg.ratio_clamp}) {
                    if (std::fabs(ratio - edge) < kink_margin) near_kink = true;
                }
            }
        }
        if (near_kink) continue;
        return s;
    }
}

}  // namespace gftest
