#include "groupforge/answer.hpp"

#include <cctype>
#include <cstddef>
#include <utility>

namespace groupforge {

namespace {

BigInt big_gcd(BigInt a, BigInt b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        BigInt t = a % b;
        a = b;
        b = t;
    }
    return a;
}

// Splits n into s^2 * m with m square-free; returns (s, m).
std::pair<BigInt, BigInt> extract_square(BigInt n) {
    BigInt s = 1;
    BigInt d = 2;
    while (d * d <= n) {
        BigInt sq = d * d;
        if (n % sq == 0) {
            n /= sq;
            s *= d;
        } else {
            ++d;
        }
    }
    return {s, n};
}

struct Cursor {
    std::string_view text;
    std::size_t pos = 0;

    bool done() const { return pos >= text.size(); }
    char peek() const { return done() ? '\0' : text[pos]; }
    bool consume(std::string_view lit) {
        if (text.substr(pos, lit.size()) == lit) {
            pos += lit.size();
            return true;
        }
        return false;
    }
};

bool parse_digits(Cursor& c, BigInt& out) {
    if (!std::isdigit(static_cast<unsigned char>(c.peek()))) return false;
    out = 0;
    while (std::isdigit(static_cast<unsigned char>(c.peek()))) {
        out = out * 10 + (c.peek() - '0');
        ++c.pos;
    }
    return true;
}

bool parse_signed_int(Cursor& c, BigInt& out) {
    std::size_t save = c.pos;
    bool neg = false;
    if (c.peek() == '-') {
        neg = true;
        ++c.pos;
    } else if (c.peek() == '+') {
        ++c.pos;
    }
    if (!parse_digits(c, out)) {
        c.pos = save;
        return false;
    }
    if (neg) out = -out;
    return true;
}

// decimal | \frac{a}{b} | a/b | integer, value returned as num/den.
bool parse_rational(Cursor& c, BigInt& num, BigInt& den) {
    den = 1;
    if (c.consume("\\frac{")) {
        BigInt a, b;
        if (!parse_signed_int(c, a) || !c.consume("}{") || !parse_signed_int(c, b) ||
            !c.consume("}")) {
            throw ParseError("malformed \\frac");
        }
        if (b == 0) throw ParseError("zero denominator");
        num = a;
        den = b;
        return true;
    }
    BigInt a;
    if (!parse_digits(c, a)) return false;
    if (c.peek() == '.') {
        ++c.pos;
        std::size_t frac_start = c.pos;
        BigInt frac;
        if (!parse_digits(c, frac)) throw ParseError("malformed decimal");
        std::size_t digits = c.pos - frac_start;
        BigInt scale = 1;
        for (std::size_t i = 0; i < digits; ++i) scale *= 10;
        num = a * scale + frac;
        den = scale;
        return true;
    }
    if (c.peek() == '/') {
        ++c.pos;
        BigInt b;
        if (!parse_signed_int(c, b)) throw ParseError("malformed fraction");
        if (b == 0) throw ParseError("zero denominator");
        num = a;
        den = b;
        return true;
    }
    num = a;
    return true;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

AnswerExpr AnswerExpr::make_rational(BigInt num, BigInt den) {
    if (den == 0) throw ParseError("zero denominator");
    AnswerExpr e;
    if (den < 0) {
        num = -num;
        den = -den;
    }
    BigInt g = big_gcd(num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    e.num = num;
    e.den = den;
    e.radicand = 1;
    e.kind = (den == 1) ? AnswerKind::Integer : AnswerKind::Rational;
    return e;
}

AnswerExpr AnswerExpr::make_radical(BigInt coeff_num, BigInt coeff_den, BigInt radicand) {
    if (radicand < 0) throw ParseError("negative radicand");
    if (radicand == 0) return make_rational(0, 1);
    auto [s, m] = extract_square(std::move(radicand));
    AnswerExpr e = make_rational(coeff_num * s, std::move(coeff_den));
    if (m > 1 && e.num != 0) {
        e.radicand = m;
        e.kind = AnswerKind::Radical;
    }
    return e;
}

AnswerExpr AnswerExpr::make_choice(char letter) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
    if (up < 'A' || up > 'D') throw ParseError("choice letter out of range");
    AnswerExpr e;
    e.kind = AnswerKind::Choice;
    e.choice = up;
    return e;
}

AnswerExpr parse_expr(std::string_view text) {
    std::string s = trim(text);
    if (s.empty()) throw ParseError("empty input");

    if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]))) {
        AnswerExpr e = AnswerExpr::make_choice(s[0]);
        e.raw = s;
        return e;
    }

    Cursor c{s};
    bool negate = false;
    if (c.peek() == '-') {
        negate = true;
        ++c.pos;
    } else if (c.peek() == '+') {
        ++c.pos;
    }

    BigInt num = 1, den = 1;
    bool in_sqrt = c.consume("\\sqrt{");
    if (!in_sqrt) {
        if (!parse_rational(c, num, den)) {
            throw ParseError("unrecognized expression: " + s);
        }
        in_sqrt = c.consume("\\sqrt{");
    }

    AnswerExpr e;
    if (in_sqrt) {
        BigInt radicand;
        if (!parse_digits(c, radicand) || !c.consume("}")) {
            throw ParseError("malformed \\sqrt");
        }
        if (!c.done()) throw ParseError("trailing characters: " + s);
        e = AnswerExpr::make_radical(num, den, radicand);
    } else {
        if (!c.done()) throw ParseError("trailing characters: " + s);
        e = AnswerExpr::make_rational(num, den);
    }
    if (negate) e.num = -e.num;
    e.raw = s;
    return e;
}

bool expr_equal(const AnswerExpr& a, const AnswerExpr& b) {
    bool a_choice = a.kind == AnswerKind::Choice;
    bool b_choice = b.kind == AnswerKind::Choice;
    if (a_choice != b_choice) return false;
    if (a_choice) return a.choice == b.choice;
    return a.num == b.num && a.den == b.den && a.radicand == b.radicand;
}

std::string render(const AnswerExpr& e) {
    if (e.kind == AnswerKind::Choice) return std::string(1, e.choice);
    std::string coeff;
    if (e.den == 1) {
        coeff = e.num.str();
    } else {
        coeff = e.num.str() + "/" + e.den.str();
    }
    if (e.radicand == 1) return coeff;
    std::string root = "\\sqrt{" + e.radicand.str() + "}";
    if (e.num == 1 && e.den == 1) return root;
    if (e.num == -1 && e.den == 1) return "-" + root;
    return coeff + root;
}

}  // namespace groupforge
