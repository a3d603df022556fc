#include "groupforge/dataset.hpp"

#include "groupforge/answer.hpp"
#include "groupforge/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace groupforge {

namespace {

using nlohmann::json;

std::string pad_index(int i) {
    std::ostringstream os;
    os << i;
    std::string s = os.str();
    while (s.size() < 6) s.insert(s.begin(), '0');
    return s;
}

struct Task {
    std::string question;
    std::string answer;
    std::string solution;
    // Wrong-but-plausible values for the MCQ form, distinct from mcq_answer.
    std::vector<std::string> distractors;
    // Correct value in the MCQ form; defaults to answer.
    std::string mcq_answer;
    // Question override for the MCQ form; empty keeps the fill-in question.
    std::string mcq_question;
};

// Answers are skewed toward "1" so that the family-conditioned tabular
// policy has a learnable target; every answer stays exactly recomputable
// from the question text.
Task make_modadd(Rng& rng) {
    int m = 5 + static_cast<int>(rng.bounded(5));
    int r;
    if (rng.next_double() < 0.85) {
        r = 1;
    } else {
        int r0 = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(m - 1)));
        r = r0 >= 1 ? r0 + 1 : r0;
    }
    int a = 10 + static_cast<int>(rng.bounded(80));
    int b0 = 10 + static_cast<int>(rng.bounded(80));
    int b = b0 + ((r - (a + b0)) % m + m) % m;

    Task t;
    t.question = "Compute (" + std::to_string(a) + " + " + std::to_string(b) + ") mod " +
                 std::to_string(m) + ".";
    t.answer = std::to_string(r);
    t.solution = std::to_string(a) + " + " + std::to_string(b) + " = " +
                 std::to_string(a + b) + ", and " + std::to_string(a + b) + " mod " +
                 std::to_string(m) + " = " + std::to_string(r) + ".";
    for (int k = 1; k <= 3; ++k) t.distractors.push_back(std::to_string((r + k) % m));
    return t;
}

Task make_digitsum(Rng& rng) {
    int n = 100 + static_cast<int>(rng.bounded(900));
    int d1 = n / 100, d2 = (n / 10) % 10, d3 = n % 10;
    int ds = d1 + d2 + d3;

    Task t;
    t.question = "What is the sum of the digits of " + std::to_string(n) + "?";
    t.answer = std::to_string(ds);
    t.solution = std::to_string(d1) + " + " + std::to_string(d2) + " + " +
                 std::to_string(d3) + " = " + std::to_string(ds) + ".";
    t.distractors = {std::to_string(ds + 1), std::to_string(ds + 2),
                     std::to_string(ds > 1 ? ds - 1 : ds + 3)};
    return t;
}

Task make_linear_eq(Rng& rng) {
    int a = 2 + static_cast<int>(rng.bounded(8));
    int x;
    if (rng.next_double() < 0.5) {
        x = 1;
    } else {
        int x0 = static_cast<int>(rng.bounded(9));
        x = x0 >= 1 ? x0 + 1 : 0;
    }
    int b = 1 + static_cast<int>(rng.bounded(9));
    int c = a * x + b;

    Task t;
    t.question = "Solve " + std::to_string(a) + "x + " + std::to_string(b) + " = " +
                 std::to_string(c) + " for x.";
    t.answer = std::to_string(x);
    t.solution = std::to_string(a) + "x = " + std::to_string(c) + " - " + std::to_string(b) +
                 " = " + std::to_string(c - b) + ", so x = " + std::to_string(c - b) + " / " +
                 std::to_string(a) + " = " + std::to_string(x) + ".";
    t.distractors = {std::to_string(x + 1), std::to_string(x + 2),
                     std::to_string(x > 0 ? x - 1 : x + 3)};
    return t;
}

struct Frac {
    int num;
    int den;
    bool operator==(const Frac& o) const { return num * o.den == o.num * den; }
    bool less(const Frac& o) const { return num * o.den < o.num * den; }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

Frac draw_reduced_fraction(Rng& rng) {
    for (;;) {
        int den = 2 + static_cast<int>(rng.bounded(8));
        int num = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(den - 1)));
        if (std::gcd(num, den) == 1) return {num, den};
    }
}

Task make_mcq_compare(Rng& rng) {
    std::vector<Frac> fracs;
    while (fracs.size() < 4) {
        Frac f = draw_reduced_fraction(rng);
        bool dup = std::any_of(fracs.begin(), fracs.end(),
                               [&](const Frac& g) { return g == f; });
        if (!dup) fracs.push_back(f);
    }
    std::size_t largest = 0;
    for (std::size_t i = 1; i < fracs.size(); ++i) {
        if (fracs[largest].less(fracs[i])) largest = i;
    }

    Task t;
    t.question = "Which is larger: " + fracs[0].str() + " or " + fracs[1].str() + "?";
    const Frac& bigger01 = fracs[0].less(fracs[1]) ? fracs[1] : fracs[0];
    t.answer = bigger01.str();
    t.solution = "Compare " + std::to_string(fracs[0].num * fracs[1].den) + " with " +
                 std::to_string(fracs[1].num * fracs[0].den) + ": the larger is " +
                 bigger01.str() + ".";
    // The MCQ form asks for the largest of all four values instead.
    t.mcq_question = "Which of the following is the largest?";
    t.mcq_answer = fracs[largest].str();
    for (std::size_t i = 0; i < fracs.size(); ++i) {
        if (i != largest) t.distractors.push_back(fracs[i].str());
    }
    return t;
}

Task make_task(const std::string& family, Rng& rng) {
    if (family == kFamilyModAdd) return make_modadd(rng);
    if (family == kFamilyDigitSum) return make_digitsum(rng);
    if (family == kFamilyLinearEq) return make_linear_eq(rng);
    if (family == kFamilyMcqCompare) return make_mcq_compare(rng);
    throw ConfigError("unknown family tag: " + family);
}

json record_to_json(const PromptRecord& r) {
    json j;
    j["id"] = r.id;
    j["family"] = r.family;
    j["question"] = r.question;
    j["reference_answer"] = r.reference_answer;
    j["solution"] = r.solution ? json(*r.solution) : json(nullptr);
    j["split"] = split_name(r.split);
    if (r.choices) {
        j["choices"] = *r.choices;
    } else {
        j["choices"] = nullptr;
    }
    return j;
}

PromptRecord record_from_json(const json& j) {
    PromptRecord r;
    r.id = j.at("id").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.reference_answer = j.at("reference_answer").get<std::string>();
    if (j.contains("solution") && !j.at("solution").is_null()) {
        r.solution = j.at("solution").get<std::string>();
    }
    r.split = split_from_name(j.at("split").get<std::string>());
    if (j.contains("choices") && !j.at("choices").is_null()) {
        r.choices = j.at("choices").get<std::vector<std::string>>();
    }
    return r;
}

}  // namespace

std::string split_name(Split s) { return s == Split::Train ? "train" : "eval"; }

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "eval") return Split::Eval;
    throw DatasetError("unknown split: " + name);
}

const std::set<std::string>& known_families() {
    static const std::set<std::string> fams = {kFamilyModAdd, kFamilyDigitSum,
                                               kFamilyLinearEq, kFamilyMcqCompare};
    return fams;
}

std::string Dataset::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ULL;
    };
    for (const PromptRecord& r : records) {
        feed(r.id);
        feed(r.reference_answer);
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

Dataset Dataset::from_records(std::vector<PromptRecord> recs) {
    Dataset d;
    d.records = std::move(recs);
    for (const PromptRecord& r : d.records) d.families[r.family] += 1;
    return d;
}

Dataset generate_dataset(const std::set<std::string>& families, int count_per_family,
                         std::uint64_t seed, Split split) {
    if (families.empty()) throw ConfigError("at least one family required");
    if (count_per_family < 1) throw ConfigError("count_per_family must be >= 1");
    for (const std::string& f : families) {
        if (!known_families().count(f)) throw ConfigError("unknown family tag: " + f);
    }

    std::vector<PromptRecord> records;
    records.reserve(families.size() * static_cast<std::size_t>(count_per_family));
    for (const std::string& family : families) {
        for (int i = 0; i < count_per_family; ++i) {
            Rng rng(mix_seed(mix_seed(seed, fnv1a64(family)),
                             static_cast<std::uint64_t>(i) ^
                                 (split == Split::Eval ? 0x9e37ULL : 0x0ULL)));
            Task task = make_task(family, rng);

            PromptRecord r;
            r.family = family;
            r.split = split;
            r.id = family + "-" + split_name(split) + "-" + pad_index(i);
            if (split == Split::Train) {
                r.question = task.question;
                r.reference_answer = task.answer;
                r.solution = task.solution;
            } else {
                // Four-way MCQ: correct value plus three distinct distractors,
                // correct position uniform so letter answers are balanced.
                const std::string correct =
                    task.mcq_answer.empty() ? task.answer : task.mcq_answer;
                int correct_pos = static_cast<int>(rng.bounded(4));
                std::vector<std::string> choices(4);
                int vi = 0;
                for (int pos = 0; pos < 4; ++pos) {
                    if (pos == correct_pos) {
                        choices[static_cast<std::size_t>(pos)] = correct;
                    } else {
                        choices[static_cast<std::size_t>(pos)] =
                            task.distractors[static_cast<std::size_t>(vi++)];
                    }
                }
                std::string labels = "ABCD";
                std::string q = task.mcq_question.empty() ? task.question : task.mcq_question;
                for (int pos = 0; pos < 4; ++pos) {
                    q += " ";
                    q += labels[static_cast<std::size_t>(pos)];
                    q += ". " + choices[static_cast<std::size_t>(pos)];
                }
                r.question = q;
                r.reference_answer = std::string(1, labels[static_cast<std::size_t>(correct_pos)]);
                r.choices = choices;
            }
            records.push_back(std::move(r));
        }
    }
    return Dataset::from_records(std::move(records));
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open for writing: " + path.string());
    for (const PromptRecord& r : d.records) {
        out << record_to_json(r).dump() << "\n";
    }
    if (!out) throw DatasetError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open for reading: " + path.string());

    std::vector<PromptRecord> records;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DatasetError("parse error at line " + std::to_string(line_no) + ": " +
                               e.what());
        }
        PromptRecord r;
        try {
            r = record_from_json(j);
        } catch (const json::exception& e) {
            throw DatasetError("parse error at line " + std::to_string(line_no) + ": " +
                               e.what());
        }
        std::vector<std::string> violations = validate_record(r);
        if (!violations.empty()) {
            std::string msg = "invalid record at line " + std::to_string(line_no) + " (" +
                              r.id + "):";
            for (const std::string& v : violations) msg += " " + v + ";";
            throw DatasetError(msg);
        }
        if (!seen_ids.insert(r.id).second) {
            throw DatasetError("duplicate id at line " + std::to_string(line_no) + ": " + r.id);
        }
        records.push_back(std::move(r));
    }
    if (records.empty()) throw DatasetError("empty dataset");
    return Dataset::from_records(std::move(records));
}

std::vector<std::string> validate_record(const PromptRecord& r) {
    std::vector<std::string> violations;
    if (r.id.empty()) violations.push_back("empty id");
    if (!known_families().count(r.family)) {
        violations.push_back("unknown family: " + r.family);
    }
    if (r.question.empty()) violations.push_back("empty question");
    try {
        parse_expr(r.reference_answer);
    } catch (const ParseError& e) {
        violations.push_back(std::string("unparseable/undefined answer: ") + e.what());
    }
    if (r.choices) {
        if (r.choices->size() != 4) violations.push_back("choices must number 4");
        if (r.reference_answer.size() != 1 || r.reference_answer[0] < 'A' ||
            r.reference_answer[0] > 'D') {
            violations.push_back("MCQ reference answer must be one of A, B, C, D");
        }
        if (r.split != Split::Eval) violations.push_back("choices allowed on eval records only");
    }
    return violations;
}

}  // namespace groupforge
