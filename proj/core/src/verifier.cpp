#include "groupforge/verifier.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <vector>

namespace groupforge {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

struct TagHit {
    std::size_t pos;
    std::size_t len;
    int id;  // 0 <think>, 1 </think>, 2 <answer>, 3 </answer>
};

std::vector<TagHit> scan_tags(std::string_view text) {
    constexpr std::array<std::string_view, 4> tags = {kThinkOpen, kThinkClose, kAnswerOpen,
                                                      kAnswerClose};
    std::vector<TagHit> hits;
    for (int id = 0; id < 4; ++id) {
        std::size_t pos = 0;
        while ((pos = text.find(tags[static_cast<std::size_t>(id)], pos)) !=
               std::string_view::npos) {
            hits.push_back({pos, tags[static_cast<std::size_t>(id)].size(), id});
            pos += 1;
        }
    }
    std::sort(hits.begin(), hits.end(), [](const TagHit& a, const TagHit& b) {
        if (a.pos != b.pos) return a.pos < b.pos;
        return a.len > b.len;  // "</think>" wins over a nested "<think>" match
    });
    // "</answer>" contains no other tag, and vice versa, so overlaps cannot
    // happen; the sort is just for positional order.
    return hits;
}

bool all_whitespace(std::string_view s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string trim_copy(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Peels $...$, enclosing braces, and \text{...} until nothing changes.
std::string strip_wrappers(std::string s) {
    for (;;) {
        std::string t = trim_copy(s);
        if (t.size() >= 2 && t.front() == '$' && t.back() == '$') {
            t = t.substr(1, t.size() - 2);
        } else if (t.size() >= 2 && t.front() == '{' && t.back() == '}') {
            int depth = 0;
            bool encloses = true;
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (t[i] == '{') ++depth;
                if (t[i] == '}') --depth;
                if (depth == 0 && i + 1 < t.size()) {
                    encloses = false;
                    break;
                }
            }
            if (!encloses || depth != 0) {
                if (t == s) return t;
                s = t;
                continue;
            }
            t = t.substr(1, t.size() - 2);
        } else if (t.rfind("\\text{", 0) == 0 && t.back() == '}') {
            t = t.substr(6, t.size() - 7);
        }
        if (t == s) return t;
        s = std::move(t);
    }
}

}  // namespace

bool check_format(std::string_view text, bool strict_think) {
    std::vector<TagHit> hits = scan_tags(text);

    std::vector<int> seq;
    seq.reserve(hits.size());
    for (const TagHit& h : hits) seq.push_back(h.id);

    const std::vector<int> with_think = {0, 1, 2, 3};
    const std::vector<int> without_think = {2, 3};
    bool has_think = seq == with_think;
    if (!has_think && (strict_think || seq != without_think)) return false;

    // Text outside the blocks must be whitespace only.
    std::size_t cursor = 0;
    std::size_t i = 0;
    while (i < hits.size()) {
        const TagHit& open = hits[i];
        const TagHit& close = hits[i + 1];
        if (!all_whitespace(text.substr(cursor, open.pos - cursor))) return false;
        cursor = close.pos + close.len;
        i += 2;
    }
    return all_whitespace(text.substr(cursor));
}

std::optional<std::string> find_boxed_payload(std::string_view text) {
    std::string_view region = text;
    std::size_t open = text.rfind(kAnswerOpen);
    if (open != std::string_view::npos) {
        std::size_t body = open + kAnswerOpen.size();
        std::size_t close = text.find(kAnswerClose, body);
        if (close != std::string_view::npos) {
            region = text.substr(body, close - body);
        }
    }

    constexpr std::string_view kBoxed = "\\boxed{";
    std::size_t at = region.rfind(kBoxed);
    while (at != std::string_view::npos) {
        std::size_t start = at + kBoxed.size();
        int depth = 1;
        for (std::size_t i = start; i < region.size(); ++i) {
            if (region[i] == '{') ++depth;
            if (region[i] == '}') {
                --depth;
                if (depth == 0) {
                    return std::string(region.substr(start, i - start));
                }
            }
        }
        // Unbalanced: try an earlier occurrence.
        if (at == 0) break;
        at = region.rfind(kBoxed, at - 1);
    }
    return std::nullopt;
}

AnswerExpr extract_answer(std::string_view text) {
    std::optional<std::string> payload = find_boxed_payload(text);
    if (!payload) throw ExtractError("no boxed answer found");

    std::string body = strip_wrappers(*payload);
    try {
        return parse_expr(body);
    } catch (const ParseError&) {
        // One trailing unit word ("24N", "2 cm") may be stripped and retried.
        std::size_t end = body.size();
        while (end > 0 && std::isalpha(static_cast<unsigned char>(body[end - 1]))) --end;
        std::string head = trim_copy(std::string_view(body).substr(0, end));
        if (end == body.size() || head.empty()) throw;
        return parse_expr(head);
    }
}

}  // namespace groupforge
