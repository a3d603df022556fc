#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace groupforge {

using TokenId = int;

// Fixed 24-symbol token inventory shared by every policy: digits, minus,
// slash, choice letters, the response markup tags, the boxed wrapper,
// space, and end-of-sequence. Ids are dense in [0, size()).
class Vocabulary {
  public:
    Vocabulary();

    int size() const { return static_cast<int>(tokens_.size()); }
    TokenId eos() const { return eos_; }
    const std::string& token_text(TokenId id) const;
    bool contains(TokenId id) const { return id >= 0 && id < size(); }

    std::optional<TokenId> find(std::string_view text) const;

    // Longest-match tokenization. Characters with no vocabulary token
    // (ordinary prose in questions and solutions) are skipped; digits,
    // signs, letters A-D, spaces and tag strings survive. Never emits eos.
    std::vector<TokenId> encode(std::string_view text) const;

    // Concatenates token texts; eos renders as the empty string.
    std::string decode(const std::vector<TokenId>& ids) const;

    static const Vocabulary& instance();

    static constexpr TokenId kDigit0 = 0;   // '0'..'9' occupy ids 0..9
    static constexpr TokenId kMinus = 10;
    static constexpr TokenId kSlash = 11;
    static constexpr TokenId kChoiceA = 12;  // 'A'..'D' occupy ids 12..15
    static constexpr TokenId kThinkOpen = 16;
    static constexpr TokenId kThinkClose = 17;
    static constexpr TokenId kAnswerOpen = 18;
    static constexpr TokenId kAnswerClose = 19;
    static constexpr TokenId kBoxedOpen = 20;  // renders "\boxed{"
    static constexpr TokenId kBoxedClose = 21; // renders "}"
    static constexpr TokenId kSpace = 22;
    static constexpr TokenId kEos = 23;

  private:
    std::vector<std::string> tokens_;
    TokenId eos_ = kEos;
};

}  // namespace groupforge
