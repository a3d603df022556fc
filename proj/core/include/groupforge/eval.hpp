#pragma once

#include "groupforge/dataset.hpp"
#include "groupforge/policy.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace groupforge {

struct FamilyScore {
    int n = 0;
    int correct = 0;

    double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / n; }
};

struct EvalReport {
    std::string dataset_fingerprint;
    std::map<std::string, FamilyScore> per_family;
    int n_total = 0;
    int n_correct = 0;
    // Correct-count histogram over bins 0..G; empty unless
    // correct_count_histogram filled it.
    std::vector<std::uint64_t> histogram;
    int histogram_group_size = 0;

    double overall_accuracy() const {
        return n_total == 0 ? 0.0 : static_cast<double>(n_correct) / n_total;
    }
};

// One greedy decode per prompt, scored by the accuracy reward. Consumes no
// rng; repeated calls are bit-identical.
EvalReport evaluate(const PolicyModel& policy, const Dataset& data);
EvalReport evaluate(const PolicySnapshot& policy, const Dataset& data);

// Samples group_size responses per prompt at the given temperature and
// bins prompts by how many were accuracy-correct. Deterministic in seed.
std::vector<std::uint64_t> correct_count_histogram(const PolicyModel& policy,
                                                   const Dataset& data, int group_size,
                                                   double temperature, std::uint64_t seed);

struct EvalDeltaRow {
    std::string family;  // "overall" for the total row
    double accuracy_a = 0.0;
    double accuracy_b = 0.0;
    double delta = 0.0;
};

// Per-family deltas between two reports over the same dataset; throws
// DatasetError naming both fingerprints on a mismatch.
std::vector<EvalDeltaRow> compare_reports(const EvalReport& a, const EvalReport& b);

std::string report_to_csv(const EvalReport& r);
std::string report_to_text(const EvalReport& r);
std::string histogram_to_csv(const std::vector<std::uint64_t>& bins);
std::string delta_to_csv(const std::vector<EvalDeltaRow>& rows);
std::string delta_to_text(const std::vector<EvalDeltaRow>& rows);

}  // namespace groupforge
