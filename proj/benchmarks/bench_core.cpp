#include <benchmark/benchmark.h>

#include "groupforge/dataset.hpp"
#include "groupforge/grpo.hpp"
#include "groupforge/policy.hpp"
#include "groupforge/rewards.hpp"
#include "groupforge/verifier.hpp"

using namespace groupforge;

namespace {

PromptRecord bench_prompt() {
    PromptRecord r;
    r.id = "modadd-bench-0";
    r.family = kFamilyModAdd;
    r.question = "Compute (47 + 15) mod 7.";
    r.reference_answer = "6";
    r.split = Split::Train;
    return r;
}

RolloutGroup bench_group(const PolicyModel& p, int g) {
    PromptRecord prompt = bench_prompt();
    Rng rng(7);
    RolloutGroup group;
    group.prompt = prompt;
    std::vector<double> totals;
    for (int i = 0; i < g; ++i) {
        Response y = sample_response(p, prompt, 1.0, rng);
        group.old_log_probs.push_back(log_probs(p, prompt, y));
        group.responses.push_back(std::move(y));
        RewardBreakdown rb;
        rb.accuracy = i % 2 == 0 ? 1.0 : 0.0;
        rb.total = rb.accuracy;
        group.rewards.push_back(rb);
        totals.push_back(rb.total);
    }
    group.advantages = group_advantages(totals);
    return group;
}

void GroupAdvantages(benchmark::State& state) {
    Rng rng(1);
    std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
    for (double& r : rewards) r = 0.5 * static_cast<double>(rng.bounded(4));
    rewards[0] = 1.5;  // guarantee variance
    rewards[1] = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(group_advantages(rewards));
    }
}
BENCHMARK(GroupAdvantages)->Arg(8)->Arg(64);

void KlTerm(benchmark::State& state) {
    Rng rng(2);
    double a = -rng.next_double(), b = -rng.next_double();
    for (auto _ : state) {
        benchmark::DoNotOptimize(kl_term(a, b));
    }
}
BENCHMARK(KlTerm);

void SampleResponseTabular(benchmark::State& state) {
    PolicyModel p = PolicyModel::make_tabular();
    PromptRecord prompt = bench_prompt();
    Rng rng(3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_response(p, prompt, 1.0, rng));
    }
}
BENCHMARK(SampleResponseTabular);

void SampleResponseMlp(benchmark::State& state) {
    PolicyModel p = PolicyModel::make_mlp(MlpDims{}, 1);
    PromptRecord prompt = bench_prompt();
    Rng rng(3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_response(p, prompt, 1.0, rng));
    }
}
BENCHMARK(SampleResponseMlp);

void LossAndGrad(benchmark::State& state) {
    PolicyModel p = state.range(0) == 0 ? PolicyModel::make_tabular()
                                        : PolicyModel::make_mlp(MlpDims{}, 1);
    RolloutGroup group = bench_group(p, 8);
    PolicySnapshot ref = snapshot(p);
    GrpoConfig cfg;
    cfg.kl_coef = 1e-3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_grad(group, p, ref, cfg));
    }
}
BENCHMARK(LossAndGrad)->Arg(0)->Arg(1);

void VerifyResponse(benchmark::State& state) {
    AnswerExpr ref = parse_expr("6");
    const std::string text = "<answer>So the result is $\\boxed{6}$</answer>";
    for (auto _ : state) {
        benchmark::DoNotOptimize(total_reward(text, ref));
    }
}
BENCHMARK(VerifyResponse);

void GenerateDataset(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            generate_dataset({kFamilyModAdd}, static_cast<int>(state.range(0)), 0, Split::Train));
    }
}
BENCHMARK(GenerateDataset)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
