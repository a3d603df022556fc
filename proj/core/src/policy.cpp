#include "groupforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace groupforge {

namespace {

void check_tokens(const Vocabulary& vocab, const Response& y) {
    for (TokenId id : y.tokens) {
        if (!vocab.contains(id)) {
            throw std::invalid_argument("unknown token id " + std::to_string(id));
        }
    }
}

double log_sum_exp(std::span<const double> v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (double& x : p) x /= s;
    return p;
}

// MLP forward caches for one position.
struct MlpForward {
    std::vector<double> z;       // input: [prompt mean | k previous embeds]
    std::vector<double> h;       // tanh hidden
    std::vector<double> logits;  // |V|
};

// Per-(policy, prompt) state shared by every position of a decode: the
// prompt token ids and mean embedding for the MLP, the family hash for the
// tabular table. Built once per operation, not once per token.
struct PromptContext {
    std::uint64_t family_hash = 0;
    std::vector<TokenId> prompt_tokens;
    std::vector<double> mean_embed;
};

PromptContext make_prompt_context(const PolicyModel& p, const PromptRecord& prompt) {
    PromptContext ctx;
    ctx.family_hash = fnv1a64(prompt.family) & 0xffffffffffffULL;
    if (p.kind == PolicyKind::Mlp) {
        ctx.prompt_tokens = p.vocab().encode(prompt.question);
        const int de = p.dims.embed;
        ctx.mean_embed.assign(static_cast<std::size_t>(de), 0.0);
        if (!ctx.prompt_tokens.empty()) {
            for (TokenId id : ctx.prompt_tokens) {
                const double* row = p.embed.data() + static_cast<std::size_t>(id) * de;
                for (int j = 0; j < de; ++j) {
                    ctx.mean_embed[static_cast<std::size_t>(j)] += row[j];
                }
            }
            for (double& x : ctx.mean_embed) {
                x /= static_cast<double>(ctx.prompt_tokens.size());
            }
        }
    }
    return ctx;
}

std::uint64_t packed_key(std::uint64_t family_hash, int position, TokenId prev) {
    return (family_hash << 16) | (static_cast<std::uint64_t>(position) << 8) |
           static_cast<std::uint64_t>(prev & 0xff);
}

MlpForward mlp_forward(const PolicyModel& p, const PromptContext& ctx,
                       std::span<const TokenId> prefix) {
    const int de = p.dims.embed;
    const int dh = p.dims.hidden;
    const int k = p.dims.context;
    const int nv = p.vocab().size();
    const int din = de * (1 + k);

    MlpForward f;
    f.z.assign(static_cast<std::size_t>(din), 0.0);
    std::copy(ctx.mean_embed.begin(), ctx.mean_embed.end(), f.z.begin());
    for (int j = 0; j < k; ++j) {
        // slot j holds the token k-j positions back; BOS rows pad the start
        std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(prefix.size()) - k + j;
        TokenId tok = idx >= 0 ? prefix[static_cast<std::size_t>(idx)] : p.bos_marker();
        const double* row = p.embed.data() + static_cast<std::size_t>(tok) * de;
        std::copy(row, row + de, f.z.begin() + static_cast<std::ptrdiff_t>(de * (1 + j)));
    }

    f.h.assign(static_cast<std::size_t>(dh), 0.0);
    for (int j = 0; j < dh; ++j) {
        double acc = p.b1[static_cast<std::size_t>(j)];
        const double* col = p.w1.data() + static_cast<std::size_t>(j) * din;
        for (int i = 0; i < din; ++i) acc += col[i] * f.z[static_cast<std::size_t>(i)];
        f.h[static_cast<std::size_t>(j)] = std::tanh(acc);
    }

    f.logits.assign(static_cast<std::size_t>(nv), 0.0);
    for (int v = 0; v < nv; ++v) {
        double acc = p.b2[static_cast<std::size_t>(v)];
        const double* col = p.w2.data() + static_cast<std::size_t>(v) * dh;
        for (int j = 0; j < dh; ++j) acc += col[j] * f.h[static_cast<std::size_t>(j)];
        f.logits[static_cast<std::size_t>(v)] = acc;
    }
    return f;
}

std::vector<double> logits_with_ctx(const PolicyModel& p, const PromptContext& ctx,
                                    std::span<const TokenId> prefix) {
    if (prefix.size() > 255) throw std::invalid_argument("position out of range");
    if (p.kind == PolicyKind::Tabular) {
        TokenId prev = prefix.empty() ? p.bos_marker() : prefix.back();
        std::uint64_t key = packed_key(ctx.family_hash, static_cast<int>(prefix.size()), prev);
        auto it = p.table.find(key);
        if (it != p.table.end()) return it->second;
        return std::vector<double>(static_cast<std::size_t>(p.vocab().size()), 0.0);
    }
    return mlp_forward(p, ctx, prefix).logits;
}

}  // namespace

Response Response::from_tokens(std::vector<TokenId> tokens) {
    Response r;
    r.text = Vocabulary::instance().decode(tokens);
    r.tokens = std::move(tokens);
    return r;
}

void ParamGradient::add_scaled(const ParamGradient& other, double scale) {
    if (kind != other.kind) throw std::invalid_argument("gradient kind mismatch");
    for (const auto& [key, row] : other.table) {
        std::vector<double>& mine = table[key];
        if (mine.empty()) mine.assign(row.size(), 0.0);
        for (std::size_t i = 0; i < row.size(); ++i) mine[i] += scale * row[i];
    }
    auto axpy = [scale](std::vector<double>& dst, const std::vector<double>& src) {
        if (dst.empty()) dst.assign(src.size(), 0.0);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += scale * src[i];
    };
    axpy(embed, other.embed);
    axpy(w1, other.w1);
    axpy(b1, other.b1);
    axpy(w2, other.w2);
    axpy(b2, other.b2);
}

void ParamGradient::scale(double s) {
    for (auto& [key, row] : table) {
        for (double& x : row) x *= s;
    }
    for (std::vector<double>* arr : {&embed, &w1, &b1, &w2, &b2}) {
        for (double& x : *arr) x *= s;
    }
}

bool ParamGradient::all_finite() const {
    for (const auto& [key, row] : table) {
        for (double x : row) {
            if (!std::isfinite(x)) return false;
        }
    }
    for (const std::vector<double>* arr : {&embed, &w1, &b1, &w2, &b2}) {
        for (double x : *arr) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

PolicyModel PolicyModel::make_tabular(int max_response_len) {
    if (max_response_len < 1 || max_response_len > 255) {
        throw ConfigError("max_response_len must be in [1, 255]");
    }
    PolicyModel p;
    p.kind = PolicyKind::Tabular;
    p.max_response_len = max_response_len;
    return p;
}

PolicyModel PolicyModel::make_mlp(MlpDims dims, std::uint64_t init_seed, int max_response_len) {
    if (max_response_len < 1 || max_response_len > 255) {
        throw ConfigError("max_response_len must be in [1, 255]");
    }
    if (dims.context < 1 || dims.embed < 1 || dims.hidden < 1) {
        throw ConfigError("mlp dims must be positive");
    }
    PolicyModel p;
    p.kind = PolicyKind::Mlp;
    p.max_response_len = max_response_len;
    p.dims = dims;

    const int nv = p.vocab().size();
    const int de = dims.embed;
    const int dh = dims.hidden;
    const int din = de * (1 + dims.context);

    Rng rng(mix_seed(init_seed, fnv1a64("mlp-init")));
    auto glorot = [&rng](std::vector<double>& arr, std::size_t n, int fan_in, int fan_out) {
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        arr.resize(n);
        for (double& x : arr) x = (2.0 * rng.next_double() - 1.0) * bound;
    };
    glorot(p.embed, static_cast<std::size_t>(nv + 1) * de, nv + 1, de);
    glorot(p.w1, static_cast<std::size_t>(din) * dh, din, dh);
    p.b1.assign(static_cast<std::size_t>(dh), 0.0);
    glorot(p.w2, static_cast<std::size_t>(nv) * dh, dh, nv);
    p.b2.assign(static_cast<std::size_t>(nv), 0.0);
    return p;
}

std::uint64_t PolicyModel::state_key(std::string_view family, int position, TokenId prev) {
    if (position < 0 || position > 255) throw std::invalid_argument("position out of range");
    std::uint64_t fam = fnv1a64(family) & 0xffffffffffffULL;  // 48 bits
    return (fam << 16) | (static_cast<std::uint64_t>(position) << 8) |
           static_cast<std::uint64_t>(prev & 0xff);
}

std::vector<double> PolicyModel::logits_at(const PromptRecord& prompt,
                                           std::span<const TokenId> prefix) const {
    return logits_with_ctx(*this, make_prompt_context(*this, prompt), prefix);
}

ParamGradient PolicyModel::zero_gradient() const {
    ParamGradient g;
    g.kind = kind;
    if (kind == PolicyKind::Mlp) {
        g.embed.assign(embed.size(), 0.0);
        g.w1.assign(w1.size(), 0.0);
        g.b1.assign(b1.size(), 0.0);
        g.w2.assign(w2.size(), 0.0);
        g.b2.assign(b2.size(), 0.0);
    }
    return g;
}

bool PolicyModel::params_finite() const {
    for (const auto& [key, row] : table) {
        for (double x : row) {
            if (!std::isfinite(x)) return false;
        }
    }
    for (const std::vector<double>* arr : {&embed, &w1, &b1, &w2, &b2}) {
        for (double x : *arr) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

ParamGradient PolicyModel::grad_weighted_logprob(const PromptRecord& prompt, const Response& y,
                                                 std::span<const double> weights) const {
    if (weights.size() != y.tokens.size()) {
        throw std::invalid_argument("weights length must equal response length");
    }
    if (y.tokens.size() > 255) throw std::invalid_argument("response too long");
    check_tokens(vocab(), y);
    ParamGradient g = zero_gradient();
    const int nv = vocab().size();

    PromptContext ctx = make_prompt_context(*this, prompt);
    if (kind == PolicyKind::Tabular) {
        for (std::size_t t = 0; t < y.tokens.size(); ++t) {
            double w = weights[t];
            if (w == 0.0) continue;
            TokenId prev = t == 0 ? bos_marker() : y.tokens[t - 1];
            std::uint64_t key = packed_key(ctx.family_hash, static_cast<int>(t), prev);
            std::vector<double> logits;
            auto it = table.find(key);
            if (it != table.end()) {
                logits = it->second;
            } else {
                logits.assign(static_cast<std::size_t>(nv), 0.0);
            }
            std::vector<double> p = softmax(logits);
            std::vector<double>& row = g.table[key];
            if (row.empty()) row.assign(static_cast<std::size_t>(nv), 0.0);
            for (int v = 0; v < nv; ++v) {
                double delta = (v == y.tokens[t]) ? 1.0 : 0.0;
                row[static_cast<std::size_t>(v)] += w * (delta - p[static_cast<std::size_t>(v)]);
            }
        }
        return g;
    }

    const int de = dims.embed;
    const int dh = dims.hidden;
    const int k = dims.context;
    const int din = de * (1 + k);
    const double n_prompt = static_cast<double>(ctx.prompt_tokens.size());

    for (std::size_t t = 0; t < y.tokens.size(); ++t) {
        double w = weights[t];
        if (w == 0.0) continue;
        std::span<const TokenId> prefix(y.tokens.data(), t);
        MlpForward f = mlp_forward(*this, ctx, prefix);
        std::vector<double> p = softmax(f.logits);

        // d logp(y_t)/d logits = e_{y_t} - p, scaled by the token weight
        std::vector<double> glogits(static_cast<std::size_t>(nv));
        for (int v = 0; v < nv; ++v) {
            double delta = (v == y.tokens[t]) ? 1.0 : 0.0;
            glogits[static_cast<std::size_t>(v)] = w * (delta - p[static_cast<std::size_t>(v)]);
        }

        std::vector<double> gh(static_cast<std::size_t>(dh), 0.0);
        for (int v = 0; v < nv; ++v) {
            double gv = glogits[static_cast<std::size_t>(v)];
            if (gv == 0.0) continue;
            const double* col = w2.data() + static_cast<std::size_t>(v) * dh;
            double* gw2 = g.w2.data() + static_cast<std::size_t>(v) * dh;
            for (int j = 0; j < dh; ++j) {
                gw2[j] += gv * f.h[static_cast<std::size_t>(j)];
                gh[static_cast<std::size_t>(j)] += gv * col[j];
            }
            g.b2[static_cast<std::size_t>(v)] += gv;
        }

        std::vector<double> gpre(static_cast<std::size_t>(dh));
        for (int j = 0; j < dh; ++j) {
            double hj = f.h[static_cast<std::size_t>(j)];
            gpre[static_cast<std::size_t>(j)] = gh[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
        }

        std::vector<double> gz(static_cast<std::size_t>(din), 0.0);
        for (int j = 0; j < dh; ++j) {
            double gj = gpre[static_cast<std::size_t>(j)];
            if (gj == 0.0) continue;
            const double* col = w1.data() + static_cast<std::size_t>(j) * din;
            double* gw1 = g.w1.data() + static_cast<std::size_t>(j) * din;
            for (int i = 0; i < din; ++i) {
                gw1[i] += gj * f.z[static_cast<std::size_t>(i)];
                gz[static_cast<std::size_t>(i)] += gj * col[i];
            }
            g.b1[static_cast<std::size_t>(j)] += gj;
        }

        if (n_prompt > 0) {
            for (TokenId id : ctx.prompt_tokens) {
                double* grow = g.embed.data() + static_cast<std::size_t>(id) * de;
                for (int i = 0; i < de; ++i) {
                    grow[i] += gz[static_cast<std::size_t>(i)] / n_prompt;
                }
            }
        }
        for (int j = 0; j < k; ++j) {
            std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t) - k + j;
            TokenId tok = idx >= 0 ? y.tokens[static_cast<std::size_t>(idx)] : bos_marker();
            double* grow = g.embed.data() + static_cast<std::size_t>(tok) * de;
            const double* src = gz.data() + static_cast<std::ptrdiff_t>(de * (1 + j));
            for (int i = 0; i < de; ++i) grow[i] += src[i];
        }
    }
    return g;
}

std::vector<double> log_probs(const PolicyModel& p, const PromptRecord& prompt,
                              const Response& y) {
    check_tokens(p.vocab(), y);
    PromptContext ctx = make_prompt_context(p, prompt);
    std::vector<double> out;
    out.reserve(y.tokens.size());
    for (std::size_t t = 0; t < y.tokens.size(); ++t) {
        std::span<const TokenId> prefix(y.tokens.data(), t);
        std::vector<double> logits = logits_with_ctx(p, ctx, prefix);
        double lse = log_sum_exp(logits);
        out.push_back(logits[static_cast<std::size_t>(y.tokens[t])] - lse);
    }
    return out;
}

std::vector<double> log_probs(const PolicySnapshot& p, const PromptRecord& prompt,
                              const Response& y) {
    return log_probs(p.model(), prompt, y);
}

Response sample_response(const PolicyModel& p, const PromptRecord& prompt, double temperature,
                         Rng& rng) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    PromptContext ctx = make_prompt_context(p, prompt);
    std::vector<TokenId> tokens;
    const TokenId eos = p.vocab().eos();
    while (static_cast<int>(tokens.size()) < p.max_response_len) {
        std::vector<double> logits = logits_with_ctx(p, ctx, tokens);
        double m = *std::max_element(logits.begin(), logits.end());
        std::vector<double> weights(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            weights[i] = std::exp((logits[i] - m) / temperature);
        }
        TokenId tok = static_cast<TokenId>(rng.categorical(weights));
        tokens.push_back(tok);
        if (tok == eos) break;
    }
    return Response::from_tokens(std::move(tokens));
}

Response sample_response(const PolicySnapshot& p, const PromptRecord& prompt,
                         double temperature, Rng& rng) {
    return sample_response(p.model(), prompt, temperature, rng);
}

Response greedy_decode(const PolicyModel& p, const PromptRecord& prompt) {
    PromptContext ctx = make_prompt_context(p, prompt);
    std::vector<TokenId> tokens;
    const TokenId eos = p.vocab().eos();
    while (static_cast<int>(tokens.size()) < p.max_response_len) {
        std::vector<double> logits = logits_with_ctx(p, ctx, tokens);
        std::size_t best = 0;
        for (std::size_t v = 1; v < logits.size(); ++v) {
            if (logits[v] > logits[best]) best = v;
        }
        tokens.push_back(static_cast<TokenId>(best));
        if (static_cast<TokenId>(best) == eos) break;
    }
    return Response::from_tokens(std::move(tokens));
}

Response greedy_decode(const PolicySnapshot& p, const PromptRecord& prompt) {
    return greedy_decode(p.model(), prompt);
}

ParamGradient grad_weighted_logprob(const PolicyModel& p, const PromptRecord& prompt,
                                    const Response& y, std::span<const double> weights) {
    return p.grad_weighted_logprob(prompt, y, weights);
}

void apply_update(PolicyModel& p, const ParamGradient& g, double lr) {
    if (g.kind != p.kind) throw std::invalid_argument("gradient kind mismatch");
    if (!g.all_finite()) throw NumericError("gradient blow-up: non-finite gradient entry");

    const std::size_t nv = static_cast<std::size_t>(p.vocab().size());
    for (const auto& [key, row] : g.table) {
        std::vector<double>& dst = p.table[key];
        if (dst.empty()) dst.assign(nv, 0.0);
        for (std::size_t i = 0; i < row.size(); ++i) dst[i] -= lr * row[i];
    }
    auto step = [lr](std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] -= lr * src[i];
    };
    step(p.embed, g.embed);
    step(p.w1, g.w1);
    step(p.b1, g.b1);
    step(p.w2, g.w2);
    step(p.b2, g.b2);

    if (!p.params_finite()) throw NumericError("non-finite parameter after update");
}

PolicySnapshot snapshot(const PolicyModel& p) { return PolicySnapshot(p); }

}  // namespace groupforge
