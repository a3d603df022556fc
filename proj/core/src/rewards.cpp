#include "groupforge/rewards.hpp"

#include "groupforge/verifier.hpp"

namespace groupforge {

double format_reward(std::string_view text, bool strict_think) {
    return check_format(text, strict_think) ? 0.5 : 0.0;
}

double accuracy_reward(std::string_view text, const AnswerExpr& reference) {
    try {
        AnswerExpr got = extract_answer(text);
        return expr_equal(got, reference) ? 1.0 : 0.0;
    } catch (const ExtractError&) {
        return 0.0;
    } catch (const ParseError&) {
        return 0.0;
    }
}

RewardBreakdown total_reward(std::string_view text, const AnswerExpr& reference,
                             bool strict_think) {
    RewardBreakdown r;
    r.accuracy = accuracy_reward(text, reference);
    r.format = format_reward(text, strict_think);
    r.total = r.accuracy + r.format;
    return r;
}

}  // namespace groupforge
