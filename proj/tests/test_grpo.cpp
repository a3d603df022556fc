#include "groupforge/grpo.hpp"

#include "fd_setup.hpp"
#include "test_utils.hpp"

#include <doctest.h>

#include <cmath>

using namespace groupforge;
using namespace gftest;

namespace {

RewardBreakdown reward_of(double accuracy, double format) {
    RewardBreakdown r;
    r.accuracy = accuracy;
    r.format = format;
    r.total = accuracy + format;
    return r;
}

}  // namespace

TEST_CASE("advantages: direct arithmetic oracles") {
    std::vector<double> a = group_advantages(std::vector<double>{1, 1, 0, 0});
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a[2] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a[3] == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<double> b = group_advantages(std::vector<double>{1, 0, 0, 0});
    CHECK(b[0] == doctest::Approx(1.7320508).epsilon(1e-7));
    CHECK(b[1] == doctest::Approx(-0.5773503).epsilon(1e-7));
    CHECK(b[2] == doctest::Approx(-0.5773503).epsilon(1e-7));
    CHECK(b[3] == doctest::Approx(-0.5773503).epsilon(1e-7));

    std::vector<double> c = group_advantages(std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5});
    for (double x : c) CHECK(x == 0.0);

    CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("advantages: normalization over random groups") {
    Rng rng(8);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> rewards(8);
        for (double& r : rewards) r = 0.5 * static_cast<double>(rng.bounded(4));
        std::vector<double> a = group_advantages(rewards);

        double mean = 0.0, var = 0.0;
        for (double r : rewards) mean += r;
        mean /= 8.0;
        for (double r : rewards) var += (r - mean) * (r - mean);

        double amean = 0.0;
        for (double x : a) amean += x;
        amean /= 8.0;
        if (var == 0.0) {
            for (double x : a) CHECK(x == 0.0);
            continue;
        }
        double avar = 0.0;
        for (double x : a) avar += (x - amean) * (x - amean);
        avar /= 8.0;
        CHECK(std::fabs(amean) < 1e-9);
        CHECK(std::fabs(std::sqrt(avar) - 1.0) < 1e-9);
    }
}

TEST_CASE("advantages: shift and positive-scale invariance") {
    Rng rng(15);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> rewards(8);
        for (double& r : rewards) r = 0.5 * static_cast<double>(rng.bounded(4));
        std::vector<double> base = group_advantages(rewards);

        std::vector<double> shifted = rewards, scaled = rewards;
        double c = 4.0 * rng.next_double() - 2.0;
        double k = 0.5 + 2.0 * rng.next_double();
        for (double& r : shifted) r += c;
        for (double& r : scaled) r *= k;

        std::vector<double> a_shift = group_advantages(shifted);
        std::vector<double> a_scale = group_advantages(scaled);
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(a_shift[i] == doctest::Approx(base[i]).epsilon(1e-9));
            CHECK(a_scale[i] == doctest::Approx(base[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("policy ratio: clamp at c") {
    CHECK(policy_ratio(-1.5, -1.5, 3.0) == 1.0);
    CHECK(policy_ratio(std::log(5.0) - 1.0, -1.0, 3.0) == 3.0);
    CHECK(policy_ratio(std::log(0.5) - 2.0, -2.0, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(policy_ratio(1000.0, -1000.0, 3.0) == 3.0);  // overflow-safe
}

TEST_CASE("kl estimator: direct evaluations and nonnegativity") {
    CHECK(kl_term(-1.0, -1.0) == 0.0);
    CHECK(kl_term(std::log(2.0) - 1.0, -1.0) == doctest::Approx(0.3068528).epsilon(1e-7));
    CHECK(kl_term(std::log(0.5) - 1.0, -1.0) == doctest::Approx(0.1931472).epsilon(1e-7));

    Rng rng(77);
    double min_seen = 1.0;
    for (int i = 0; i < 1000000; ++i) {
        double ref = -8.0 * rng.next_double();
        double now = -8.0 * rng.next_double();
        double v = kl_term(ref, now);
        min_seen = std::min(min_seen, v);
    }
    CHECK(min_seen >= -1e-12);
}

TEST_CASE("loss: on-policy point is exactly zero") {
    PolicyModel p = PolicyModel::make_tabular();
    PromptRecord prompt = make_prompt();
    RolloutGroup g;
    g.prompt = prompt;
    g.responses.push_back(Response::from_tokens({2}));
    g.responses.push_back(Response::from_tokens({5}));
    for (const Response& y : g.responses) {
        g.old_log_probs.push_back(log_probs(p, prompt, y));
    }
    g.rewards = {reward_of(1, 0), reward_of(0, 0)};
    g.advantages = group_advantages(std::vector<double>{1, 0});
    CHECK(g.advantages[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.advantages[1] == doctest::Approx(-1.0).epsilon(1e-12));

    GrpoConfig cfg;
    cfg.group_size = 2;
    auto [lb, grad] = loss_and_grad(g, p, snapshot(p), cfg);
    CHECK(lb.loss == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lb.kl_estimate == 0.0);
    CHECK(lb.kl_term == 0.0);
    CHECK(lb.mean_ratio == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lb.max_ratio == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lb.clip_fraction == 0.0);
    CHECK(lb.clamp_fraction == 0.0);
}

TEST_CASE("loss: kl gate at beta = 0") {
    Rng rng(5);
    GrpoConfig cfg;
    cfg.group_size = 2;
    cfg.kl_coef = 0.0;
    FdSetup s = make_fd_setup(rng, PolicyKind::Tabular, 2, 1e-3, cfg);
    auto [lb, grad] = loss_and_grad(s.group, s.policy, s.ref, cfg);
    CHECK(lb.kl_term == 0.0);
    CHECK(lb.kl_estimate > 0.0);  // estimate still reported
    CHECK(lb.loss == doctest::Approx(-lb.surrogate).epsilon(1e-12));
}

TEST_CASE("loss: hand-evaluated two-response case") {
    // Single-token responses; all three policies differ by fixed logit
    // offsets so every quantity is computable by hand.
    PromptRecord prompt = make_prompt();
    PolicyModel p = PolicyModel::make_tabular();
    PolicyModel old_p = PolicyModel::make_tabular();
    PolicyModel ref_p = PolicyModel::make_tabular();

    std::uint64_t key = PolicyModel::state_key("modadd", 0, p.bos_marker());
    std::vector<double> row(24, 0.0);
    row[0] = 0.3;
    p.table[key] = row;
    row[0] = 0.1;
    old_p.table[key] = row;
    row[0] = 0.2;
    ref_p.table[key] = row;

    RolloutGroup g;
    g.prompt = prompt;
    g.responses.push_back(Response::from_tokens({0}));
    g.responses.push_back(Response::from_tokens({1}));
    for (const Response& y : g.responses) {
        g.old_log_probs.push_back(log_probs(old_p, prompt, y));
    }
    g.rewards = {reward_of(1, 0.5), reward_of(0, 0)};
    g.advantages = group_advantages(std::vector<double>{1.5, 0.0});

    GrpoConfig cfg;
    cfg.group_size = 2;
    cfg.kl_coef = 0.01;
    auto [lb, grad] = loss_and_grad(g, p, snapshot(ref_p), cfg);

    // Independent arithmetic on the same quantities.
    auto lp = [](double logit_tok, double bias0, int tok) {
        double z = std::exp(bias0) + 23.0;
        (void)logit_tok;
        double l = tok == 0 ? bias0 : 0.0;
        return l - std::log(z);
    };
    double lp_new0 = lp(0, 0.3, 0), lp_old0 = lp(0, 0.1, 0), lp_ref0 = lp(0, 0.2, 0);
    double lp_new1 = lp(0, 0.3, 1), lp_old1 = lp(0, 0.1, 1), lp_ref1 = lp(0, 0.2, 1);
    double r0 = std::exp(lp_new0 - lp_old0);
    double r1 = std::exp(lp_new1 - lp_old1);
    double a0 = 1.0, a1 = -1.0;
    double surr0 = std::min(r0 * a0, std::clamp(r0, 0.8, 1.2) * a0);
    double surr1 = std::min(r1 * a1, std::clamp(r1, 0.8, 1.2) * a1);
    double kl0 = std::exp(lp_ref0 - lp_new0) - 1.0 - (lp_ref0 - lp_new0);
    double kl1 = std::exp(lp_ref1 - lp_new1) - 1.0 - (lp_ref1 - lp_new1);
    double expected_surr = 0.5 * (surr0 + surr1);
    double expected_kl_est = 0.5 * (kl0 + kl1);
    double expected_loss = 0.01 * expected_kl_est - expected_surr;

    CHECK(lb.surrogate == doctest::Approx(expected_surr).epsilon(1e-12));
    CHECK(lb.kl_estimate == doctest::Approx(expected_kl_est).epsilon(1e-9));
    CHECK(lb.loss == doctest::Approx(expected_loss).epsilon(1e-9));
}

TEST_CASE("loss gradient matches central finite differences") {
    Rng rng(4242);
    GrpoConfig cfg;
    cfg.clip_epsilon = 0.2;
    cfg.ratio_clamp = 3.0;

    const double betas[3] = {0.0, 1e-3, 0.1};
    double worst = 0.0;
    int configs = 0;

    for (int trial = 0; trial < 105; ++trial) {
        PolicyKind kind = trial % 3 == 2 ? PolicyKind::Mlp : PolicyKind::Tabular;
        int g_count = 2 + static_cast<int>(rng.bounded(3));
        cfg.group_size = g_count;
        cfg.kl_coef = betas[trial % 3];

        FdSetup s = make_fd_setup(rng, kind, g_count, 2e-3, cfg);
        auto [lb, grad] = loss_and_grad(s.group, s.policy, s.ref, cfg);

        std::vector<double*> params;
        std::vector<double> analytic;
        if (kind == PolicyKind::Tabular) {
            params = tabular_params(s.policy, grad);
            analytic = tabular_grad_values(grad);
        } else {
            params = mlp_params(s.policy);
            analytic = mlp_grad_values(grad);
        }
        auto f = [&]() {
            return loss_and_grad(s.group, s.policy, s.ref, cfg).first.loss;
        };
        std::vector<double> fd = central_differences(f, params);
        worst = std::max(worst, max_relative_error(analytic, fd));
        ++configs;
    }
    CHECK(configs >= 100);
    CHECK(worst < 1e-4);
}

TEST_CASE("clip dead-zone: saturated responses contribute no gradient") {
    // Responses visit disjoint tabular states (different first tokens), so
    // per-response gradient isolation is visible in the table keys.
    PromptRecord prompt = make_prompt();
    PolicyModel p = PolicyModel::make_tabular();
    PolicyModel old_p = PolicyModel::make_tabular();

    std::uint64_t key = PolicyModel::state_key("modadd", 0, p.bos_marker());
    std::vector<double> row(24, 0.0);
    row[2] = 0.5;  // pushes the token-2 ratio well above 1+eps
    row[5] = 0.1;  // keeps the token-5 ratio inside the clip range
    p.table[key] = row;

    RolloutGroup g;
    g.prompt = prompt;
    g.responses.push_back(Response::from_tokens({2}));
    g.responses.push_back(Response::from_tokens({5}));
    for (const Response& y : g.responses) {
        g.old_log_probs.push_back(log_probs(old_p, prompt, y));
    }
    g.rewards = {reward_of(1, 0), reward_of(0, 0)};
    g.advantages = group_advantages(std::vector<double>{1.0, 0.0});
    REQUIRE(g.advantages[0] == doctest::Approx(1.0));

    GrpoConfig cfg;
    cfg.group_size = 2;
    cfg.clip_epsilon = 0.2;

    std::vector<double> lp_new0 = log_probs(p, prompt, g.responses[0]);
    REQUIRE(std::exp(lp_new0[0] - g.old_log_probs[0][0]) > 1.2);

    auto [lb, grad] = loss_and_grad(g, p, snapshot(old_p), cfg);

    // Response 0 sits in the positive-advantage dead zone, so the whole
    // gradient must equal response 1's contribution alone.
    std::vector<double> lp_new1 = log_probs(p, prompt, g.responses[1]);
    double r1 = std::exp(lp_new1[0] - g.old_log_probs[1][0]);
    REQUIRE(r1 > 0.8);
    REQUIRE(r1 < 1.2);
    double w_obj1 = r1 * g.advantages[1];
    std::vector<double> w1_only(1, -w_obj1 / 2.0);
    ParamGradient expected = p.grad_weighted_logprob(prompt, g.responses[1], w1_only);
    REQUIRE(grad.table.count(key) == 1);
    const std::vector<double>& grow = grad.table.at(key);
    const std::vector<double>& erow = expected.table.at(key);
    for (std::size_t v = 0; v < grow.size(); ++v) {
        CHECK(grow[v] == doctest::Approx(erow[v]).epsilon(1e-12));
    }
    CHECK(lb.clip_fraction == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("clip dead-zone symmetric case: negative advantage, ratio below") {
    PromptRecord prompt = make_prompt();
    PolicyModel p = PolicyModel::make_tabular();
    PolicyModel old_p = PolicyModel::make_tabular();

    std::uint64_t key = PolicyModel::state_key("modadd", 0, p.bos_marker());
    std::vector<double> row(24, 0.0);
    row[2] = -0.6;  // ratio for token 2 well below 1-eps
    p.table[key] = row;

    RolloutGroup g;
    g.prompt = prompt;
    g.responses.push_back(Response::from_tokens({2}));  // negative advantage
    g.responses.push_back(Response::from_tokens({5}));
    for (const Response& y : g.responses) {
        g.old_log_probs.push_back(log_probs(old_p, prompt, y));
    }
    g.rewards = {reward_of(0, 0), reward_of(1, 0)};
    g.advantages = group_advantages(std::vector<double>{0.0, 1.0});
    REQUIRE(g.advantages[0] == doctest::Approx(-1.0));

    GrpoConfig cfg;
    cfg.group_size = 2;
    std::vector<double> lp_new = log_probs(p, prompt, g.responses[0]);
    REQUIRE(std::exp(lp_new[0] - g.old_log_probs[0][0]) < 0.8);

    auto [lb, grad] = loss_and_grad(g, p, snapshot(old_p), cfg);
    // Same isolation: all gradient mass must come from response 1.
    std::vector<double> lp1 = log_probs(p, prompt, g.responses[1]);
    double r1 = std::exp(lp1[0] - g.old_log_probs[1][0]);
    double w_obj1 = (r1 < 1.2) ? r1 * g.advantages[1] : 0.0;
    std::vector<double> w(1, -w_obj1 / 2.0);
    ParamGradient expected = p.grad_weighted_logprob(prompt, g.responses[1], w);
    for (std::size_t v = 0; v < grad.table.at(key).size(); ++v) {
        CHECK(grad.table.at(key)[v] ==
              doctest::Approx(expected.table.at(key)[v]).epsilon(1e-12));
    }
    CHECK(lb.clip_fraction == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ratio clamp keeps reported ratios at or below c") {
    PromptRecord prompt = make_prompt();
    PolicyModel p = PolicyModel::make_tabular();
    PolicyModel old_p = PolicyModel::make_tabular();
    std::uint64_t key = PolicyModel::state_key("modadd", 0, p.bos_marker());
    std::vector<double> row(24, 0.0);
    row[2] = 4.0;  // ratio far above the clamp
    p.table[key] = row;

    RolloutGroup g;
    g.prompt = prompt;
    g.responses.push_back(Response::from_tokens({2}));
    g.responses.push_back(Response::from_tokens({5}));
    for (const Response& y : g.responses) {
        g.old_log_probs.push_back(log_probs(old_p, prompt, y));
    }
    g.rewards = {reward_of(0, 0), reward_of(1, 0)};
    g.advantages = group_advantages(std::vector<double>{0.0, 1.0});

    GrpoConfig cfg;
    cfg.group_size = 2;
    auto [lb, grad] = loss_and_grad(g, p, snapshot(old_p), cfg);
    CHECK(lb.max_ratio == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(lb.clamp_fraction == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("config invariants") {
    GrpoConfig cfg;
    cfg.validate();
    cfg.group_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.group_size = 8;
    cfg.clip_epsilon = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.clip_epsilon = 0.2;
    cfg.ratio_clamp = 1.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
