#pragma once

#include "groupforge/answer.hpp"

#include <string_view>

namespace groupforge {

// The two rule-based reward components and their sum. accuracy is 0 or 1,
// format is 0 or 0.5, total is always their sum.
struct RewardBreakdown {
    double accuracy = 0.0;
    double format = 0.0;
    double total = 0.0;
};

// 0.5 iff the response carries the tagged structure, else 0.
double format_reward(std::string_view text, bool strict_think = false);

// 1 iff a boxed answer extracts and matches the reference exactly;
// extraction and parse failures score 0, never throw.
double accuracy_reward(std::string_view text, const AnswerExpr& reference);

RewardBreakdown total_reward(std::string_view text, const AnswerExpr& reference,
                             bool strict_think = false);

}  // namespace groupforge
