// groupforge: rule-based RL post-training on synthetic verifiable tasks.
//
// Subcommands: gen-data, train, eval, report, verify.
// Exit codes: 0 success, 2 usage/config error, 3 collapse abort.

#include "groupforge/checkpoint.hpp"
#include "groupforge/config.hpp"
#include "groupforge/eval.hpp"
#include "groupforge/text.hpp"
#include "groupforge/trainer.hpp"
#include "groupforge/verifier.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace groupforge;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCollapse = 3;

std::string iso_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct GenDataArgs {
    std::vector<std::string> families;
    int count = 0;
    std::uint64_t seed = 0;
    std::string split = "train";
    std::string out;
    bool force = false;
};

int cmd_gen_data(const GenDataArgs& args) {
    std::set<std::string> families(args.families.begin(), args.families.end());
    Split split = split_from_name(args.split);
    if (fs::exists(args.out) && !args.force) {
        std::cerr << "refusing to overwrite " << args.out << " (use --force)\n";
        return kExitUsage;
    }
    Dataset d = generate_dataset(families, args.count, args.seed, split);
    save_dataset(d, args.out);
    std::cout << "wrote " << d.size() << " records to " << args.out << "\n";
    for (const auto& [family, n] : d.families) {
        std::cout << "  " << family << ": " << n << "\n";
    }
    return kExitOk;
}

struct TrainArgs {
    std::string config_path;
    std::string out_dir;
    std::string init_checkpoint;
    std::int64_t seed = -1;
    int threads = 0;
};

int cmd_train(const TrainArgs& args) {
    TrainConfig cfg = load_train_config(args.config_path);
    apply_seed_override(cfg);
    if (args.seed >= 0) {
        for (StageConfig& s : cfg.stages) s.seed = static_cast<std::uint64_t>(args.seed);
        cfg.warmup.seed = static_cast<std::uint64_t>(args.seed);
    }
    if (args.threads > 0) cfg.threads = args.threads;

    std::vector<std::string> violations = validate_train_config(cfg);
    if (!violations.empty()) {
        std::cerr << "invalid config:\n";
        for (const std::string& v : violations) std::cerr << "  - " << v << "\n";
        return kExitUsage;
    }

    fs::path out_dir(args.out_dir);
    fs::create_directories(out_dir);

    RunManifest manifest;
    manifest.seed = cfg.stages.front().seed;
    manifest.config_json = train_config_to_json_text(cfg);
    manifest.start_time = iso_now();
    for (std::size_t s = 1; s <= cfg.stages.size(); ++s) {
        manifest.artifact_paths.push_back("metrics_stage" + std::to_string(s) + ".jsonl");
        manifest.artifact_paths.push_back("checkpoint_stage" + std::to_string(s) + ".json");
    }
    manifest.artifact_paths.push_back("timings.csv");
    write_manifest(manifest, out_dir / "manifest.json");

    PolicyModel policy =
        args.init_checkpoint.empty() ? cfg.policy.build() : load_policy(args.init_checkpoint);

    Dataset warmup_data = load_dataset(cfg.stages.front().dataset_path);
    format_warmup(policy, warmup_data, cfg.warmup);

    std::optional<Dataset> eval_data;
    if (!cfg.eval_dataset_path.empty()) eval_data = load_dataset(cfg.eval_dataset_path);

    std::ofstream timings(out_dir / "timings.csv", std::ios::binary);
    timings << "stage,update,seconds\n";
    std::ofstream evals(out_dir / "evals.jsonl", std::ios::binary);
    const auto t0 = std::chrono::steady_clock::now();

    UpdateHook hook = [&](int stage_index, int update, const PolicyModel& p) {
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timings << stage_index + 1 << "," << update << "," << format_double(secs) << "\n";
        if (cfg.eval_cadence > 0 && eval_data && update % cfg.eval_cadence == 0) {
            EvalReport r = evaluate(p, *eval_data);
            nlohmann::json j;
            j["stage"] = stage_index + 1;
            j["update"] = update;
            j["accuracy"] = r.overall_accuracy();
            evals << j.dump() << "\n";
        }
    };

    ScheduleResult result = run_schedule(policy, cfg, out_dir, hook);
    for (std::size_t s = 0; s < result.stages.size(); ++s) {
        save_metrics(result.stages[s].metrics,
                     out_dir / ("metrics_stage" + std::to_string(s + 1) + ".jsonl"));
    }

    if (result.collapsed()) {
        const StageResult& aborted = result.stages.at(static_cast<std::size_t>(*result.aborted_stage));
        std::cerr << "training aborted in stage " << *result.aborted_stage + 1 << ": "
                  << aborted.collapse->to_string() << "\n";
        return kExitCollapse;
    }
    std::size_t total_updates = 0;
    for (const StageResult& s : result.stages) total_updates += s.metrics.size();
    std::cout << "completed " << result.stages.size() << " stage(s), " << total_updates
              << " update(s); artifacts in " << out_dir.string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out_prefix;
    int histogram_g = 0;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& args) {
    PolicyModel policy = load_policy(args.checkpoint);
    Dataset data = load_dataset(args.dataset);
    EvalReport report = evaluate(policy, data);

    std::ofstream csv(args.out_prefix + ".csv", std::ios::binary);
    csv << report_to_csv(report);
    std::ofstream txt(args.out_prefix + ".txt", std::ios::binary);
    txt << report_to_text(report);
    std::cout << report_to_text(report);

    if (args.histogram_g > 0) {
        std::vector<std::uint64_t> bins = correct_count_histogram(
            policy, data, args.histogram_g, args.temperature, args.seed);
        std::ofstream hist(args.out_prefix + "_hist.csv", std::ios::binary);
        hist << histogram_to_csv(bins);
    }
    return kExitOk;
}

struct ReportArgs {
    std::string metrics_path;
    std::string compare_path;
    std::string out_dir;
};

struct MetricColumn {
    const char* name;
    double (*get)(const MetricsRecord&);
};

const MetricColumn kColumns[] = {
    {"mean_accuracy", [](const MetricsRecord& m) { return m.mean_accuracy; }},
    {"mean_total_reward", [](const MetricsRecord& m) { return m.mean_total_reward; }},
    {"mean_response_len", [](const MetricsRecord& m) { return m.mean_response_len; }},
    {"mean_ratio", [](const MetricsRecord& m) { return m.mean_ratio; }},
    {"max_ratio", [](const MetricsRecord& m) { return m.max_ratio; }},
    {"clip_fraction", [](const MetricsRecord& m) { return m.clip_fraction; }},
    {"clamp_fraction", [](const MetricsRecord& m) { return m.clamp_fraction; }},
    {"mean_kl", [](const MetricsRecord& m) { return m.mean_kl; }},
    {"loss", [](const MetricsRecord& m) { return m.loss; }},
};

std::string curve_svg(const std::vector<std::vector<double>>& series, const std::string& title) {
    const double width = 640, height = 360, pad = 48;
    double lo = 0.0, hi = 1e-9;
    std::size_t n = 1;
    for (const auto& s : series) {
        n = std::max(n, s.size());
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi <= lo) hi = lo + 1.0;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<text x=\"" << pad << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
    svg << "<line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - 8
        << "\" y2=\"" << height - pad << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << pad << "\" y1=\"24\" x2=\"" << pad << "\" y2=\"" << height - pad
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"4\" y=\"30\" font-size=\"10\">" << format_double(hi) << "</text>\n";
    svg << "<text x=\"4\" y=\"" << height - pad << "\" font-size=\"10\">" << format_double(lo)
        << "</text>\n";
    const char* colors[] = {"steelblue", "firebrick"};
    for (std::size_t s = 0; s < series.size(); ++s) {
        if (series[s].empty()) continue;
        svg << "<polyline fill=\"none\" stroke=\"" << colors[s % 2] << "\" points=\"";
        for (std::size_t i = 0; i < series[s].size(); ++i) {
            double x = pad + (width - pad - 8) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.0);
            double y = height - pad - (height - pad - 24) * (series[s][i] - lo) / (hi - lo);
            svg << format_double(x) << "," << format_double(y) << " ";
        }
        svg << "\"/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

int cmd_report(const ReportArgs& args) {
    std::vector<MetricsRecord> a = load_metrics(args.metrics_path);
    std::vector<MetricsRecord> b;
    if (!args.compare_path.empty()) b = load_metrics(args.compare_path);
    fs::path out(args.out_dir);
    fs::create_directories(out);

    for (const MetricColumn& col : kColumns) {
        std::ofstream csv(out / (std::string(col.name) + ".csv"), std::ios::binary);
        csv << (b.empty() ? "update,value\n" : "update,value,value_compare\n");
        std::size_t rows = std::max(a.size(), b.size());
        for (std::size_t i = 0; i < rows; ++i) {
            csv << (i + 1);
            csv << "," << (i < a.size() ? format_double(col.get(a[i])) : "");
            if (!b.empty()) csv << "," << (i < b.size() ? format_double(col.get(b[i])) : "");
            csv << "\n";
        }

        std::vector<std::vector<double>> series;
        series.emplace_back();
        for (const MetricsRecord& m : a) series.back().push_back(col.get(m));
        if (!b.empty()) {
            series.emplace_back();
            for (const MetricsRecord& m : b) series.back().push_back(col.get(m));
        }
        std::ofstream svg(out / (std::string(col.name) + ".svg"), std::ios::binary);
        svg << curve_svg(series, col.name);
    }
    std::cout << "wrote " << std::size(kColumns) << " curve(s) to " << out.string() << "\n";
    return kExitOk;
}

struct VerifyArgs {
    std::string response_path;
    std::string reference;
    std::string batch_path;
    bool require_format = false;
    bool strict_think = false;
};

int cmd_verify(const VerifyArgs& args) {
    if (!args.batch_path.empty()) {
        std::ifstream in(args.batch_path, std::ios::binary);
        if (!in) {
            std::cerr << "cannot open " << args.batch_path << "\n";
            return kExitUsage;
        }
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                nlohmann::json j = nlohmann::json::parse(line);
                AnswerExpr ref = parse_expr(j.at("reference").get<std::string>());
                AnswerExpr got = extract_answer(j.at("response").get<std::string>());
                std::cout << line_no << "\t" << (expr_equal(got, ref) ? "match" : "mismatch")
                          << "\n";
            } catch (const std::exception& e) {
                std::cout << line_no << "\terror\t" << e.what() << "\n";
            }
        }
        return kExitOk;
    }

    std::ifstream in(args.response_path, std::ios::binary);
    if (!in) {
        std::cerr << "cannot open " << args.response_path << "\n";
        return kExitUsage;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        AnswerExpr ref = parse_expr(args.reference);
        AnswerExpr got = extract_answer(buf.str());
        if (args.require_format && !check_format(buf.str(), args.strict_think)) {
            std::cout << "mismatch: response format non-compliant\n";
            return 1;
        }
        if (expr_equal(got, ref)) {
            std::cout << "match\n";
            return kExitOk;
        }
        std::cout << "mismatch: got " << render(got) << ", expected " << render(ref) << "\n";
        return 1;
    } catch (const ExtractError& e) {
        std::cerr << "extraction error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"groupforge: rule-based RL post-training on verifiable synthetic tasks"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic task corpus");
    gen_cmd->add_option("--family", gen.families, "Task family (repeatable)")->required();
    gen_cmd->add_option("--count", gen.count, "Records per family")->required();
    gen_cmd->add_option("--seed", gen.seed, "Generator seed")->default_val(0);
    gen_cmd->add_option("--split", gen.split, "train or eval")->default_val("train");
    gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();
    gen_cmd->add_flag("--force", gen.force, "Overwrite an existing file");

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "Run the training schedule");
    train_cmd->add_option("--config", train.config_path, "JSON config path")->required();
    train_cmd->add_option("--out-dir", train.out_dir, "Artifact directory")->required();
    train_cmd->add_option("--seed", train.seed, "Override every stage seed");
    train_cmd->add_option("--threads", train.threads, "Rollout worker cap");
    train_cmd->add_option("--init-checkpoint", train.init_checkpoint,
                          "Start from a saved policy instead of a fresh one");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Policy checkpoint")->required();
    eval_cmd->add_option("--dataset", eval_args.dataset, "Dataset JSONL")->required();
    eval_cmd->add_option("--out-prefix", eval_args.out_prefix, "Output file prefix")->required();
    eval_cmd->add_option("--histogram", eval_args.histogram_g,
                         "Also sample G responses per prompt and bin correct counts");
    eval_cmd->add_option("--temperature", eval_args.temperature, "Histogram sampling temperature")
        ->default_val(1.0);
    eval_cmd->add_option("--seed", eval_args.seed, "Histogram sampling seed")->default_val(0);

    ReportArgs report;
    CLI::App* report_cmd = app.add_subcommand("report", "Render metric curves from a log");
    report_cmd->add_option("--metrics", report.metrics_path, "Metrics JSONL")->required();
    report_cmd->add_option("--compare", report.compare_path, "Second log to overlay");
    report_cmd->add_option("--out-dir", report.out_dir, "Output directory")->required();

    VerifyArgs verify;
    CLI::App* verify_cmd = app.add_subcommand("verify", "Check a response against a reference");
    verify_cmd->add_option("--response", verify.response_path, "Response text file");
    verify_cmd->add_option("--reference", verify.reference, "Reference answer expression");
    verify_cmd->add_option("--batch", verify.batch_path,
                           "JSONL of {response, reference} pairs");
    verify_cmd->add_flag("--require-format", verify.require_format,
                         "Also demand the tagged answer structure");
    verify_cmd->add_flag("--strict-think", verify.strict_think,
                         "With --require-format, the <think> block is mandatory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) return cmd_train(train);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (report_cmd->parsed()) return cmd_report(report);
        if (verify_cmd->parsed()) {
            if (verify.batch_path.empty() &&
                (verify.response_path.empty() || verify.reference.empty())) {
                std::cerr << "verify needs --response and --reference, or --batch\n";
                return kExitUsage;
            }
            return cmd_verify(verify);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DatasetError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
