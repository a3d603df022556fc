#pragma once

#include "groupforge/grpo.hpp"
#include "groupforge/policy.hpp"
#include "groupforge/rewards.hpp"
#include "groupforge/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace gftest {

using namespace groupforge;

inline PromptRecord make_prompt(const std::string& family = "modadd",
                                const std::string& question = "Compute (3 + 5) mod 7.",
                                const std::string& answer = "1") {
    PromptRecord r;
    r.id = family + "-test-0";
    r.family = family;
    r.question = question;
    r.reference_answer = answer;
    r.split = Split::Train;
    return r;
}

// Tagged, boxed response text for an answer expression.
inline std::string boxed_response(const std::string& answer) {
    return "<answer>\\boxed{" + answer + "}</answer>";
}

// Token sequence <answer> \boxed{ ...answer... } </answer> <eos>.
inline std::vector<TokenId> boxed_tokens(const std::string& answer) {
    const Vocabulary& v = Vocabulary::instance();
    std::vector<TokenId> out = {Vocabulary::kAnswerOpen, Vocabulary::kBoxedOpen};
    std::vector<TokenId> ans = v.encode(answer);
    out.insert(out.end(), ans.begin(), ans.end());
    out.push_back(Vocabulary::kBoxedClose);
    out.push_back(Vocabulary::kAnswerClose);
    out.push_back(v.eos());
    return out;
}

// Biases the tabular policy so that greedy decoding emits exactly `seq`
// for this family; with bias >= 25 sampling is effectively deterministic.
inline void force_sequence(PolicyModel& p, const std::string& family,
                           const std::vector<TokenId>& seq, double bias = 30.0) {
    const int nv = p.vocab().size();
    TokenId prev = p.bos_marker();
    for (std::size_t t = 0; t < seq.size(); ++t) {
        std::uint64_t key = PolicyModel::state_key(family, static_cast<int>(t), prev);
        std::vector<double>& row = p.table[key];
        if (row.empty()) row.assign(static_cast<std::size_t>(nv), 0.0);
        row[static_cast<std::size_t>(seq[t])] = bias;
        prev = seq[t];
    }
}

// Pointers to every tabular row parameter reachable from the gradient's
// support, materializing absent rows as zeros (a no-op for behavior).
inline std::vector<double*> tabular_params(PolicyModel& p, const ParamGradient& support) {
    std::vector<std::uint64_t> keys;
    for (const auto& [key, row] : support.table) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    std::vector<double*> out;
    const std::size_t nv = static_cast<std::size_t>(p.vocab().size());
    for (std::uint64_t key : keys) {
        std::vector<double>& row = p.table[key];
        if (row.empty()) row.assign(nv, 0.0);
        for (double& x : row) out.push_back(&x);
    }
    return out;
}

inline std::vector<double> tabular_grad_values(const ParamGradient& g) {
    std::vector<std::uint64_t> keys;
    for (const auto& [key, row] : g.table) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    std::vector<double> out;
    for (std::uint64_t key : keys) {
        for (double x : g.table.at(key)) out.push_back(x);
    }
    return out;
}

inline std::vector<double*> mlp_params(PolicyModel& p) {
    std::vector<double*> out;
    for (std::vector<double>* arr : {&p.embed, &p.w1, &p.b1, &p.w2, &p.b2}) {
        for (double& x : *arr) out.push_back(&x);
    }
    return out;
}

inline std::vector<double> mlp_grad_values(const ParamGradient& g) {
    std::vector<double> out;
    for (const std::vector<double>* arr : {&g.embed, &g.w1, &g.b1, &g.w2, &g.b2}) {
        out.insert(out.end(), arr->begin(), arr->end());
    }
    return out;
}

// Central finite differences of a scalar in every listed parameter.
inline std::vector<double> central_differences(const std::function<double()>& f,
                                               const std::vector<double*>& params,
                                               double h = 1e-5) {
    std::vector<double> out;
    out.reserve(params.size());
    for (double* p : params) {
        const double saved = *p;
        *p = saved + h;
        const double hi = f();
        *p = saved - h;
        const double lo = f();
        *p = saved;
        out.push_back((hi - lo) / (2.0 * h));
    }
    return out;
}

// Per-component relative error with a floor tied to the gradient scale.
inline double max_relative_error(const std::vector<double>& analytic,
                                 const std::vector<double>& numeric) {
    double scale = 0.0;
    for (double x : numeric) scale = std::max(scale, std::fabs(x));
    for (double x : analytic) scale = std::max(scale, std::fabs(x));
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double denom = std::max({std::fabs(numeric[i]), 1e-2 * scale, 1e-12});
        worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

}  // namespace gftest
