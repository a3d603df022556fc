#pragma once

#include "groupforge/dataset.hpp"
#include "groupforge/errors.hpp"
#include "groupforge/rng.hpp"
#include "groupforge/vocab.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace groupforge {

enum class PolicyKind { Tabular, Mlp };

struct MlpDims {
    int context = 4;   // previous tokens fed to the hidden layer
    int embed = 16;    // token embedding width
    int hidden = 32;   // tanh hidden width
};

// A sampled (or decoded) response: raw token ids, ending in eos unless
// truncated at max_response_len, plus the detokenized text.
struct Response {
    std::vector<TokenId> tokens;
    std::string text;

    std::size_t length() const { return tokens.size(); }

    static Response from_tokens(std::vector<TokenId> tokens);
};

// Gradient with the same shape as the owning model's parameters. Tabular
// gradients are sparse (only visited states appear); absent rows are zero.
struct ParamGradient {
    PolicyKind kind = PolicyKind::Tabular;
    std::unordered_map<std::uint64_t, std::vector<double>> table;
    std::vector<double> embed, w1, b1, w2, b2;

    void add_scaled(const ParamGradient& other, double scale);
    void scale(double s);
    bool all_finite() const;
};

// Small autoregressive categorical policy. Tabular conditions each step on
// (family, position, previous token); the MLP additionally sees a mean
// embedding of the prompt tokens. Parameters are plain public arrays: the
// finite-difference oracles in the tests perturb them directly.
class PolicyModel {
  public:
    PolicyKind kind = PolicyKind::Tabular;
    int max_response_len = 24;
    MlpDims dims;

    // Tabular: packed state key -> |V| logits. Missing rows mean zeros.
    std::unordered_map<std::uint64_t, std::vector<double>> table;

    // MLP parameters. embed has vocab()+1 rows; the extra row embeds the
    // begin-of-response marker.
    std::vector<double> embed, w1, b1, w2, b2;

    const Vocabulary& vocab() const { return Vocabulary::instance(); }
    TokenId bos_marker() const { return vocab().size(); }

    static PolicyModel make_tabular(int max_response_len = 24);
    static PolicyModel make_mlp(MlpDims dims, std::uint64_t init_seed,
                                int max_response_len = 24);

    static std::uint64_t state_key(std::string_view family, int position, TokenId prev);

    // Logits over the vocabulary for the next token after `prefix`.
    std::vector<double> logits_at(const PromptRecord& prompt,
                                  std::span<const TokenId> prefix) const;

    ParamGradient zero_gradient() const;
    bool params_finite() const;

    ParamGradient grad_weighted_logprob(const PromptRecord& prompt, const Response& y,
                                        std::span<const double> weights) const;
};

// Frozen copy of a model; cheap to pass around, immutable by contract.
class PolicySnapshot {
  public:
    PolicySnapshot() = default;
    explicit PolicySnapshot(const PolicyModel& m)
        : model_(std::make_shared<const PolicyModel>(m)) {}

    const PolicyModel& model() const { return *model_; }
    bool valid() const { return model_ != nullptr; }

  private:
    std::shared_ptr<const PolicyModel> model_;
};

// Natural-log probability of each response token given the prompt and the
// preceding tokens; one value per token, all finite and <= 0.
std::vector<double> log_probs(const PolicyModel& p, const PromptRecord& prompt,
                              const Response& y);
std::vector<double> log_probs(const PolicySnapshot& p, const PromptRecord& prompt,
                              const Response& y);

// Draws tokens from softmax(logits / temperature) until eos or the length
// cap. Deterministic given the rng state.
Response sample_response(const PolicyModel& p, const PromptRecord& prompt, double temperature,
                         Rng& rng);
Response sample_response(const PolicySnapshot& p, const PromptRecord& prompt,
                         double temperature, Rng& rng);

// Argmax decoding, ties broken toward the lowest token id; consumes no rng.
Response greedy_decode(const PolicyModel& p, const PromptRecord& prompt);
Response greedy_decode(const PolicySnapshot& p, const PromptRecord& prompt);

// Exact gradient of sum_t weights[t] * log pi(y_t | prompt, y_<t).
ParamGradient grad_weighted_logprob(const PolicyModel& p, const PromptRecord& prompt,
                                    const Response& y, std::span<const double> weights);

// theta <- theta - lr * g. Throws NumericError on non-finite gradients.
void apply_update(PolicyModel& p, const ParamGradient& g, double lr);

PolicySnapshot snapshot(const PolicyModel& p);

}  // namespace groupforge
