#pragma once

#include "groupforge/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace groupforge {

enum class Split { Train, Eval };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// One verifiable question with its exact reference answer. Train records
// are fill-in; eval records carry four choice values and a letter answer.
struct PromptRecord {
    std::string id;
    std::string family;
    std::string question;
    std::string reference_answer;
    std::optional<std::string> solution;
    Split split = Split::Train;
    std::optional<std::vector<std::string>> choices;
};

struct Dataset {
    std::vector<PromptRecord> records;
    std::map<std::string, int> families;

    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }

    // Content digest over ids and answers; eval reports use it to refuse
    // cross-dataset comparisons.
    std::string fingerprint() const;

    static Dataset from_records(std::vector<PromptRecord> records);
};

inline constexpr const char* kFamilyModAdd = "modadd";
inline constexpr const char* kFamilyDigitSum = "digitsum";
inline constexpr const char* kFamilyLinearEq = "linear-eq";
inline constexpr const char* kFamilyMcqCompare = "mcq-compare";

const std::set<std::string>& known_families();

// Deterministic in (families, count, seed, split). Train records are
// fill-in with worked solutions; eval records are four-way MCQ.
Dataset generate_dataset(const std::set<std::string>& families, int count_per_family,
                         std::uint64_t seed, Split split);

// JSON Lines, UTF-8, LF; fields exactly: id, family, question,
// reference_answer, solution (nullable), split, choices (nullable).
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Every violated invariant, not only the first; empty means ok.
std::vector<std::string> validate_record(const PromptRecord& r);

}  // namespace groupforge
