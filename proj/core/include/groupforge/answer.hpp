#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace groupforge {

using BigInt = boost::multiprecision::cpp_int;

enum class AnswerKind { Integer, Rational, Radical, Choice };

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Exact answer value in canonical form: (num/den) * sqrt(radicand) with
// gcd(|num|, den) = 1, den > 0 and radicand square-free. radicand == 1
// means a pure rational; den == 1 on top of that means an integer.
// Choice answers carry an uppercase letter instead of a value.
struct AnswerExpr {
    AnswerKind kind = AnswerKind::Integer;
    BigInt num = 0;
    BigInt den = 1;
    BigInt radicand = 1;
    char choice = 0;
    std::string raw;

    static AnswerExpr make_rational(BigInt num, BigInt den);
    static AnswerExpr make_radical(BigInt coeff_num, BigInt coeff_den, BigInt radicand);
    static AnswerExpr make_choice(char letter);
};

// Grammar: optional sign; integers; a/b fractions; \frac{a}{b}; decimals
// (exact conversion to rationals); coefficient \sqrt{n}; bare choice
// letters A-D (case-insensitive). Anything else is a ParseError, as are
// zero denominators and empty input.
AnswerExpr parse_expr(std::string_view text);

// Exact equality of canonical forms. No floating point anywhere.
bool expr_equal(const AnswerExpr& a, const AnswerExpr& b);

// Canonical text form; parse_expr(render(e)) == e.
std::string render(const AnswerExpr& e);

}  // namespace groupforge
