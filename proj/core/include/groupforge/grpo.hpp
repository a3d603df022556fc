#pragma once

#include "groupforge/policy.hpp"
#include "groupforge/rewards.hpp"

#include <span>
#include <utility>
#include <vector>

namespace groupforge {

struct GrpoConfig {
    int group_size = 8;         // responses sampled per prompt
    double clip_epsilon = 0.2;  // PPO clip width
    double kl_coef = 0.0;       // KL penalty weight; 0 disables the penalty
    double ratio_clamp = 3.0;   // hard upper clamp on the policy ratio

    void validate() const;
};

// One prompt with its sampled responses, rollout-time log-probs, reward
// breakdowns and (once computed) group-standardized advantages.
struct RolloutGroup {
    PromptRecord prompt;
    std::vector<Response> responses;
    std::vector<std::vector<double>> old_log_probs;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> advantages;
    int accuracy_count = 0;

    bool has_advantages() const { return advantages.size() == responses.size(); }
};

struct LossBreakdown {
    double loss = 0.0;
    double surrogate = 0.0;      // mean clipped-surrogate objective term
    double kl_term = 0.0;        // KL contribution to the loss (kl_coef-weighted)
    double kl_estimate = 0.0;    // raw per-token mean of rho - 1 - ln(rho)
    double mean_ratio = 0.0;     // post-clamp
    double max_ratio = 0.0;      // post-clamp
    double clip_fraction = 0.0;  // tokens whose surrogate gradient the clip zeroes
    double clamp_fraction = 0.0; // tokens at or above the ratio clamp
    std::size_t token_count = 0;
};

// Group-standardized advantages: (r - mean) / population std. A
// zero-variance group yields all zeros.
std::vector<double> group_advantages(std::span<const double> rewards);

// min(exp(logp_new - logp_old), clamp_c); the lower bound 0 is automatic.
double policy_ratio(double logp_new, double logp_old, double clamp_c);

// rho - 1 - ln(rho) with rho = exp(logp_ref - logp_new); >= 0, zero iff
// rho == 1. Computed via expm1 so near-equality stays nonnegative.
double kl_term(double logp_ref, double logp_new);

// Sampled clipped-surrogate loss with the ratio clamp applied before the
// clip, plus its exact analytic gradient. Throws NumericError when an
// intermediate stops being finite.
std::pair<LossBreakdown, ParamGradient> loss_and_grad(const RolloutGroup& group,
                                                      const PolicyModel& p,
                                                      const PolicySnapshot& ref,
                                                      const GrpoConfig& cfg);

}  // namespace groupforge
