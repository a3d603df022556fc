#include "groupforge/grpo.hpp"

#include "groupforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace groupforge {

void GrpoConfig::validate() const {
    if (group_size < 2) throw ConfigError("group_size: G >= 2 required");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
        throw ConfigError("clip_epsilon must lie in (0, 1)");
    }
    if (kl_coef < 0.0) throw ConfigError("kl_coef must be >= 0");
    if (!(ratio_clamp > 1.0 + clip_epsilon)) {
        throw ConfigError("ratio_clamp must exceed 1 + clip_epsilon");
    }
}

std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw std::invalid_argument("group needs at least 2 rewards");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw std::invalid_argument("non-finite reward");
    }
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;

    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;

    std::vector<double> out(rewards.size(), 0.0);
    if (var == 0.0) return out;
    const double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        out[i] = (rewards[i] - mean) * inv_std;
    }
    return out;
}

double policy_ratio(double logp_new, double logp_old, double clamp_c) {
    return std::min(std::exp(logp_new - logp_old), clamp_c);
}

double kl_term(double logp_ref, double logp_new) {
    double d = logp_ref - logp_new;  // ln(rho)
    return std::expm1(d) - d;
}

std::pair<LossBreakdown, ParamGradient> loss_and_grad(const RolloutGroup& group,
                                                      const PolicyModel& p,
                                                      const PolicySnapshot& ref,
                                                      const GrpoConfig& cfg) {
    const std::size_t n = group.responses.size();
    if (n < 2) throw std::invalid_argument("group needs at least 2 responses");
    if (!group.has_advantages()) throw std::invalid_argument("advantages not computed");
    if (group.old_log_probs.size() != n) {
        throw std::invalid_argument("old_log_probs missing");
    }
    if (!ref.valid()) throw std::invalid_argument("reference snapshot required");

    const double eps = cfg.clip_epsilon;
    const double clamp_c = cfg.ratio_clamp;
    const double beta = cfg.kl_coef;
    const double inv_g = 1.0 / static_cast<double>(n);

    LossBreakdown out;
    ParamGradient grad = p.zero_gradient();
    double ratio_sum = 0.0;
    std::size_t clip_dead = 0;
    std::size_t clamp_hits = 0;

    for (std::size_t i = 0; i < n; ++i) {
        const Response& y = group.responses[i];
        const std::vector<double>& lp_old = group.old_log_probs[i];
        if (lp_old.size() != y.tokens.size()) {
            throw std::invalid_argument("old_log_probs length mismatch");
        }
        const double adv = group.advantages[i];
        const std::vector<double> lp_new = log_probs(p, group.prompt, y);
        const std::vector<double> lp_ref = log_probs(ref, group.prompt, y);

        const double inv_len = 1.0 / static_cast<double>(y.tokens.size());
        std::vector<double> weights(y.tokens.size(), 0.0);
        double surr_sum = 0.0;
        double kl_sum = 0.0;

        for (std::size_t t = 0; t < y.tokens.size(); ++t) {
            const double s = std::exp(lp_new[t] - lp_old[t]);
            const bool clamped = s >= clamp_c;
            const double r = clamped ? clamp_c : s;
            const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
            const double surr = std::min(r * adv, clipped * adv);

            bool active;
            if (adv > 0.0) {
                active = !clamped && r < 1.0 + eps;
            } else if (adv < 0.0) {
                active = !clamped && r > 1.0 - eps;
            } else {
                active = false;
            }
            const bool clip_zeroed =
                (adv > 0.0 && r > 1.0 + eps) || (adv < 0.0 && r < 1.0 - eps);

            const double rho = std::exp(lp_ref[t] - lp_new[t]);
            const double kl = kl_term(lp_ref[t], lp_new[t]);

            const double w_obj = (active ? s * adv : 0.0) + beta * (rho - 1.0);
            if (!std::isfinite(surr) || !std::isfinite(kl) || !std::isfinite(w_obj)) {
                throw NumericError("numeric instability in loss computation");
            }

            surr_sum += surr;
            kl_sum += kl;
            weights[t] = -w_obj * inv_len * inv_g;

            ratio_sum += r;
            out.max_ratio = std::max(out.max_ratio, r);
            if (clip_zeroed) ++clip_dead;
            if (clamped) ++clamp_hits;
            ++out.token_count;
        }

        out.surrogate += surr_sum * inv_len * inv_g;
        out.kl_estimate += kl_sum * inv_len * inv_g;
        grad.add_scaled(p.grad_weighted_logprob(group.prompt, y, weights), 1.0);
    }

    out.kl_term = beta * out.kl_estimate;
    out.loss = out.kl_term - out.surrogate;
    if (out.token_count > 0) {
        out.mean_ratio = ratio_sum / static_cast<double>(out.token_count);
        out.clip_fraction = static_cast<double>(clip_dead) / static_cast<double>(out.token_count);
        out.clamp_fraction =
            static_cast<double>(clamp_hits) / static_cast<double>(out.token_count);
    }
    if (!std::isfinite(out.loss)) throw NumericError("numeric instability in loss computation");
    return {out, std::move(grad)};
}

}  // namespace groupforge
