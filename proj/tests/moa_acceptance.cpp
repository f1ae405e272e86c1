// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "moa/agent.hpp"
#include "moa/classifier.hpp"
#include "moa/cli.hpp"
#include "moa/errors.hpp"
#include "moa/evaluation.hpp"
#include "moa/log.hpp"
#include "moa/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace moa;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Verdict()>& check) {
    const auto start = Clock::now();
    Verdict v;
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << v.detail << " (" << timing
              << ")" << std::endl;
    failures += !v.pass;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double x, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << std::fixed << x;
    return s.str();
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", x);
    return buf;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> read_lines(const std::filesystem::path& p) {
    std::vector<json> out;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << e.str();
    return code;
}

// The shipped demo config with paths made absolute and outputs redirected.
std::filesystem::path scratch_config(const std::filesystem::path& dir) {
    auto cfg = json::parse(slurp(demo_dir() / "demo.cfg"));
    for (auto& [key, value] : cfg["paths"].items()) {
        value = (demo_dir() / value.get<std::string>()).string();
    }
    cfg["paths"]["output_dir"] = (dir / "agent").string();
    cfg["offline"] = true;
    const auto path = dir / "acceptance.cfg";
    std::ofstream(path) << cfg.dump(2);
    return path;
}

std::map<std::string, Idh1Label> label_map(std::size_t mutant, std::size_t wildtype) {
    std::map<std::string, Idh1Label> out;
    for (std::size_t i = 0; i < mutant + wildtype; ++i) {
        out["P" + std::to_string(100000 + i)] = i < mutant ? Idh1Label::mutant : Idh1Label::wildtype;
    }
    return out;
}

// Max minus min of per-fold counts for each class.
std::array<std::size_t, 2> class_spread(const eval::FoldSplit& s, const std::map<std::string, Idh1Label>& labels,
                                        std::array<std::vector<std::size_t>, 2>* counts_out = nullptr) {
    std::array<std::vector<std::size_t>, 2> counts{std::vector<std::size_t>(s.n_folds, 0),
                                                   std::vector<std::size_t>(s.n_folds, 0)};
    for (const auto& [id, fold] : s.assignments) ++counts[class_index(labels.at(id))][fold];
    if (counts_out) *counts_out = counts;
    std::array<std::size_t, 2> spread{};
    for (int c = 0; c < 2; ++c) {
        spread[c] = *std::max_element(counts[c].begin(), counts[c].end()) -
                    *std::min_element(counts[c].begin(), counts[c].end());
    }
    return spread;
}

}  // namespace

int main() {
    log::set_min_level(log::Level::error);
    const auto dir = scratch_dir("acceptance");
    const auto cfg_path = scratch_config(dir);
    const auto results_a = dir / "run_a" / "results.jsonl";
    const auto results_b = dir / "run_b" / "results.jsonl";
    const std::vector<std::string> experiment_args = {"--log-level", "error", "experiment", "run", "--config",
                                                      cfg_path.string(), "--offline", "--out"};

    report(1, "AUROC rank statistic equals brute-force pair counting", [] {
        std::mt19937_64 rng(1);
        double worst = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 2 + rng() % 199;
            const int levels = 1 + static_cast<int>(rng() % 25);  // few levels force ties
            std::vector<double> scores(n);
            std::vector<int> labels(n);
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = static_cast<double>(rng() % levels) / levels;
                labels[i] = static_cast<int>(rng() % 2);
            }
            const auto positives = std::count(labels.begin(), labels.end(), 1);
            if (positives == 0) labels[0] = 1;
            if (positives == static_cast<long>(n)) labels[0] = 0;
            worst = std::max(worst, std::abs(eval::auroc(scores, labels) - brute_force_auroc(scores, labels)));
        }
        const bool ok = worst <= 1e-12;
        return Verdict{ok, "1000 instances (n <= 200, tied scores), max |diff| " + sci(worst)};
    });

    report(2, "analytic gradients match central differences (h = 1e-5)", [] {
        const auto start = Clock::now();
        double worst = 0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) worst = std::max(worst, max_gradient_error(seed));
        const double secs = seconds_since(start);
        return Verdict{worst < 1e-4 && secs < 30.0, "20 random models, max relative error " + sci(worst)};
    });

    report(3, "stratified folds", [] {
        const auto labels = label_map(374, 114);
        std::array<std::vector<std::size_t>, 2> counts;
        class_spread(eval::stratified_folds(labels, 5, 0), labels, &counts);
        for (auto& c : counts) std::sort(c.rbegin(), c.rend());
        const bool exact = counts[1] == std::vector<std::size_t>{75, 75, 75, 75, 74} &&
                           counts[0] == std::vector<std::size_t>{23, 23, 23, 23, 22};
        std::mt19937_64 rng(3);
        int violations = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const int k = 2 + static_cast<int>(rng() % 9);
            const auto random_labels = label_map(k + rng() % 400, k + rng() % 400);
            const auto spread = class_spread(eval::stratified_folds(random_labels, k, rng()), random_labels);
            violations += spread[0] > 1 || spread[1] > 1;
        }
        return Verdict{exact && violations == 0,
                       std::string("374/114 per-class counts ") + (exact ? "{75x4,74} / {23x4,22}" : "WRONG") +
                           ", +-1 violations on 100 random profiles: " + std::to_string(violations)};
    });

    int code_a = -1, code_b = -1;
    double run_a_seconds = 0;
    {
        const auto start = Clock::now();
        auto args = experiment_args;
        args.push_back(results_a.string());
        code_a = run_cli(args);
        run_a_seconds = seconds_since(start);
        args.back() = results_b.string();
        code_b = run_cli(args);
    }

    report(4, "offline cohort run with histology disabled makes zero histology calls", [&] {
        std::string out;
        const auto gen_dir = dir / "reports";
        const int code = run_cli({"--log-level", "error", "report", "generate", "--cases",
                                  (demo_dir() / "cases.jsonl").string(), "--config", cfg_path.string(), "--out",
                                  gen_dir.string(), "--offline", "--no-histology"},
                                 &out);
        if (code != 0) return Verdict{false, "report generate exited " + std::to_string(code)};
        // Count from the transcripts themselves, for both the standalone run and the experiment's report stage.
        std::size_t transcripts = 0, histology = 0;
        for (const auto& root : {gen_dir / "transcripts", dir / "agent" / "transcripts"}) {
            for (const auto& entry : std::filesystem::directory_iterator(root)) {
                const auto t = agent::AgentTranscript::from_json(json::parse(slurp(entry.path())));
                ++transcripts;
                histology += t.invocations_of(tools::kHistology);
                for (const auto& name : t.offered_tools) histology += name == tools::kHistology;
            }
        }
        const auto reported = json::parse(out).at("histology_calls").get<std::size_t>();
        return Verdict{histology == 0 && reported == 0 && transcripts > 0,
                       std::to_string(transcripts) + " transcripts, " + std::to_string(histology) +
                           " histology invocations/offers"};
    });

    report(5, "normalization fitted on training folds only, training moments 0/1", [&] {
        if (code_a != 0) return Verdict{false, "experiment run exited " + std::to_string(code_a)};
        std::size_t folds = 0, leaked = 0;
        double worst_mean = 0, worst_std = 0;
        for (const auto& a : read_lines(pipeline::audit_path(results_a))) {
            ++folds;
            const auto fitted = a.at("fitted_on").get<std::set<std::string>>();
            for (const auto& id : a.at("held_out").get<std::vector<std::string>>()) leaked += fitted.contains(id);
            worst_mean = std::max(worst_mean, a.at("max_abs_train_mean").get<double>());
            worst_std = std::max(worst_std, a.at("max_abs_train_std_error").get<double>());
        }
        const bool ok = folds == 30 && leaked == 0 && worst_mean < 1e-9 && worst_std < 1e-9;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu folds, %zu leaked ids, max |mean| %.2e, max |std-1| %.2e", folds, leaked,
                      worst_mean, worst_std);
        return Verdict{ok, buf};
    });

    report(6, "fused report + histology beats each unimodal input by >= 0.05 AUROC", [&] {
        if (code_a != 0) return Verdict{false, "experiment run exited " + std::to_string(code_a)};
        std::map<std::string, double> mean_auroc;
        for (const auto& r : read_lines(results_a)) {
            mean_auroc[r.at("config").get<std::string>()] = r.at("mean").at("auroc").get<double>();
        }
        const double fused = mean_auroc.at("moa_with_histology");
        const double report_only = mean_auroc.at("moa_no_histology");
        const double histology = mean_auroc.at("histology");
        const bool ok = fused - report_only >= 0.05 && fused - histology >= 0.05 && run_a_seconds < 120.0;
        return Verdict{ok, "fused " + fmt(fused) + " vs report-only " + fmt(report_only) + ", histology " +
                               fmt(histology) + "; full run " + fmt(run_a_seconds, 1) + "s"};
    });

    report(7, "MLP on 2-d separable data reaches >= 0.95 held-out accuracy", [] {
        const auto start = Clock::now();
        const double acc = separable_holdout_accuracy(3);
        const double secs = seconds_since(start);
        return Verdict{acc >= 0.95 && secs < 60.0, "held-out accuracy " + fmt(acc)};
    });

    report(8, "same-seed experiment runs give byte-identical records", [&] {
        if (code_a != 0 || code_b != 0) return Verdict{false, "experiment run failed"};
        const auto a = slurp(results_a), b = slurp(results_b);
        const bool ok = !a.empty() && a == b && slurp(pipeline::audit_path(results_a)) == slurp(pipeline::audit_path(results_b));
        return Verdict{ok, std::to_string(a.size()) + " bytes, " + (ok ? "identical" : "DIFFERENT")};
    });

    report(9, "everything runs offline without network access", [&] {
        auto cfg = load_run_config(cfg_path);
        auto services = pipeline::make_services(cfg, true);
        bool guarded = false;
        try {
            services.transport->send({"GET", "https://eutils.ncbi.nlm.nih.gov/", {}, {}});
        } catch (const OfflineViolation&) {
            guarded = true;
        }
        // Every tool call during the experiment was served from fixtures.
        std::size_t calls = 0, failed = 0;
        for (const auto& entry : std::filesystem::directory_iterator(dir / "agent" / "transcripts")) {
            const auto t = agent::AgentTranscript::from_json(json::parse(slurp(entry.path())));
            for (const auto& r : t.rounds) {
                ++calls;
                failed += r.result.status != tools::ToolStatus::ok;
            }
        }
        const bool ok = guarded && code_a == 0 && code_b == 0 && calls > 0 && failed == 0;
        return Verdict{ok, std::string("offline transport ") + (guarded ? "refuses" : "ALLOWS") + " requests; " +
                               std::to_string(calls) + " tool calls replayed, " + std::to_string(failed) + " failed"};
    });

    report(10, "spot values", [] {
        const double f1 = eval::f1_from_counts(3, 1, 2);
        const double auc = eval::auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
        const auto w = mlp::inverse_frequency_weights({114, 374});
        const bool ok = std::abs(f1 - 0.6667) < 5e-5 && auc == 0.75 && std::abs(w[1] - 0.6524) < 1e-4 &&
                        std::abs(w[0] - 2.1404) < 1e-4;
        return Verdict{ok, "F1(3,1,2) = " + fmt(f1) + ", AUROC = " + fmt(auc, 2) + ", weights [mutant " + fmt(w[1]) +
                               ", wildtype " + fmt(w[0]) + "]"};
    });

    std::cout << (failures ? "FAILED: " + std::to_string(failures) + " criterion(s)" : std::string("ALL PASS"))
              << std::endl;
    return failures ? 1 : 0;
}
