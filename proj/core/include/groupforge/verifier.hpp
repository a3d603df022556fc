#pragma once

#include "groupforge/answer.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace groupforge {

struct ExtractError : std::runtime_error {
    explicit ExtractError(const std::string& what) : std::runtime_error(what) {}
};

// True iff the response is: optional whitespace, an optional
// <think>...</think> block, exactly one <answer>...</answer> block, then
// optional whitespace. Tags must be properly nested and never repeated.
// strict_think additionally demands the <think> block be present.
bool check_format(std::string_view text, bool strict_think = false);

// Locates the last \boxed{...} inside the <answer> block (or the last one
// anywhere when tags are absent), strips TeX wrappers and a trailing unit
// word, and parses the content. Throws ExtractError when no boxed content
// exists and ParseError when the content is out of grammar.
AnswerExpr extract_answer(std::string_view text);

// The raw boxed payload before parsing, if any; test and tooling hook.
std::optional<std::string> find_boxed_payload(std::string_view text);

}  // namespace groupforge
