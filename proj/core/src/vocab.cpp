#include "groupforge/vocab.hpp"

#include <stdexcept>

namespace groupforge {

Vocabulary::Vocabulary() {
    tokens_ = {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
               "-", "/", "A", "B", "C", "D",
               "<think>", "</think>", "<answer>", "</answer>",
               "\\boxed{", "}", " ", "<eos>"};
}

const std::string& Vocabulary::token_text(TokenId id) const {
    if (!contains(id)) throw std::out_of_range("token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view text) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == text) return static_cast<TokenId>(i);
    }
    return std::nullopt;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
    std::vector<TokenId> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        TokenId best = -1;
        std::size_t best_len = 0;
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (static_cast<TokenId>(i) == eos_) continue;
            const std::string& t = tokens_[i];
            if (t.size() > best_len && text.substr(pos, t.size()) == t) {
                best = static_cast<TokenId>(i);
                best_len = t.size();
            }
        }
        if (best >= 0) {
            out.push_back(best);
            pos += best_len;
        } else {
            ++pos;  // unknown character, skip
        }
    }
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id == eos_) continue;
        out += token_text(id);
    }
    return out;
}

const Vocabulary& Vocabulary::instance() {
    static const Vocabulary v;
    return v;
}

}  // namespace groupforge
