#include "groupforge/eval.hpp"

#include "groupforge/rewards.hpp"
#include "groupforge/text.hpp"
#include "groupforge/verifier.hpp"

#include <iomanip>
#include <sstream>

namespace groupforge {

EvalReport evaluate(const PolicyModel& policy, const Dataset& data) {
    if (data.empty()) throw DatasetError("empty dataset");
    EvalReport report;
    report.dataset_fingerprint = data.fingerprint();
    for (const PromptRecord& r : data.records) {
        const AnswerExpr reference = parse_expr(r.reference_answer);
        const Response y = greedy_decode(policy, r);
        const bool correct = accuracy_reward(y.text, reference) == 1.0;
        FamilyScore& score = report.per_family[r.family];
        score.n += 1;
        report.n_total += 1;
        if (correct) {
            score.correct += 1;
            report.n_correct += 1;
        }
    }
    return report;
}

EvalReport evaluate(const PolicySnapshot& policy, const Dataset& data) {
    return evaluate(policy.model(), data);
}

std::vector<std::uint64_t> correct_count_histogram(const PolicyModel& policy,
                                                   const Dataset& data, int group_size,
                                                   double temperature, std::uint64_t seed) {
    if (group_size < 1) throw ConfigError("group_size must be >= 1");
    if (data.empty()) throw DatasetError("empty dataset");
    std::vector<std::uint64_t> bins(static_cast<std::size_t>(group_size) + 1, 0);
    for (const PromptRecord& r : data.records) {
        const AnswerExpr reference = parse_expr(r.reference_answer);
        Rng rng(mix_seed(seed, fnv1a64(r.id)));
        int correct = 0;
        for (int i = 0; i < group_size; ++i) {
            Response y = sample_response(policy, r, temperature, rng);
            if (accuracy_reward(y.text, reference) == 1.0) ++correct;
        }
        bins[static_cast<std::size_t>(correct)] += 1;
    }
    return bins;
}

std::vector<EvalDeltaRow> compare_reports(const EvalReport& a, const EvalReport& b) {
    if (a.dataset_fingerprint != b.dataset_fingerprint) {
        throw DatasetError("reports cover different datasets: " + a.dataset_fingerprint +
                           " vs " + b.dataset_fingerprint);
    }
    std::vector<EvalDeltaRow> rows;
    for (const auto& [family, score_a] : a.per_family) {
        EvalDeltaRow row;
        row.family = family;
        row.accuracy_a = score_a.accuracy();
        auto it = b.per_family.find(family);
        row.accuracy_b = it == b.per_family.end() ? 0.0 : it->second.accuracy();
        row.delta = row.accuracy_b - row.accuracy_a;
        rows.push_back(row);
    }
    EvalDeltaRow overall;
    overall.family = "overall";
    overall.accuracy_a = a.overall_accuracy();
    overall.accuracy_b = b.overall_accuracy();
    overall.delta = overall.accuracy_b - overall.accuracy_a;
    rows.push_back(overall);
    return rows;
}

std::string report_to_csv(const EvalReport& r) {
    std::string out = "family,n,correct,accuracy\n";
    for (const auto& [family, score] : r.per_family) {
        out += family + "," + std::to_string(score.n) + "," + std::to_string(score.correct) +
               "," + format_double(score.accuracy()) + "\n";
    }
    out += "overall," + std::to_string(r.n_total) + "," + std::to_string(r.n_correct) + "," +
           format_double(r.overall_accuracy()) + "\n";
    return out;
}

std::string report_to_text(const EvalReport& r) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "family" << std::right << std::setw(8) << "n"
       << std::setw(10) << "correct" << std::setw(12) << "accuracy" << "\n";
    auto line = [&os](const std::string& family, int n, int correct, double acc) {
        os << std::left << std::setw(14) << family << std::right << std::setw(8) << n
           << std::setw(10) << correct << std::setw(12) << format_double(acc) << "\n";
    };
    for (const auto& [family, score] : r.per_family) {
        line(family, score.n, score.correct, score.accuracy());
    }
    line("overall", r.n_total, r.n_correct, r.overall_accuracy());
    return os.str();
}

std::string histogram_to_csv(const std::vector<std::uint64_t>& bins) {
    std::string out = "bin,count\n";
    for (std::size_t i = 0; i < bins.size(); ++i) {
        out += std::to_string(i) + "," + std::to_string(bins[i]) + "\n";
    }
    return out;
}

std::string delta_to_csv(const std::vector<EvalDeltaRow>& rows) {
    std::string out = "family,accuracy_a,accuracy_b,delta\n";
    for (const EvalDeltaRow& row : rows) {
        out += row.family + "," + format_double(row.accuracy_a) + "," +
               format_double(row.accuracy_b) + "," + format_double(row.delta) + "\n";
    }
    return out;
}

std::string delta_to_text(const std::vector<EvalDeltaRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "family" << std::right << std::setw(12) << "acc_a"
       << std::setw(12) << "acc_b" << std::setw(12) << "delta" << "\n";
    for (const EvalDeltaRow& row : rows) {
        os << std::left << std::setw(14) << row.family << std::right << std::setw(12)
           << format_double(row.accuracy_a) << std::setw(12) << format_double(row.accuracy_b)
           << std::setw(12) << format_double(row.delta) << "\n";
    }
    return os.str();
}

}  // namespace groupforge
