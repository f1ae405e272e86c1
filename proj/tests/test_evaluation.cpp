#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "moa/errors.hpp"
#include "moa/evaluation.hpp"
#include "oracles.hpp"

using namespace moa;
using namespace moa::eval;

namespace {

std::map<std::string, Idh1Label> label_map(std::size_t mutant, std::size_t wildtype) {
    std::map<std::string, Idh1Label> out;
    for (std::size_t i = 0; i < mutant + wildtype; ++i) {
        out["P" + std::to_string(1000 + i)] = i < mutant ? Idh1Label::mutant : Idh1Label::wildtype;
    }
    return out;
}

std::map<int, std::array<std::size_t, 2>> per_fold_counts(const FoldSplit& s,
                                                        const std::map<std::string, Idh1Label>& labels) {
    std::map<int, std::array<std::size_t, 2>> counts;
    for (const auto& [id, fold] : s.assignments) ++counts[fold][class_index(labels.at(id))];
    return counts;
}

struct Cohort {
    CohortManifest manifest;
    FeatureSources sources;
};

// Report and slide each carry half of the signal.
Cohort synthetic_cohort(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<PatientCase> cases;
    Cohort c;
    for (std::size_t i = 0; i < n; ++i) {
        PatientCase p;
        p.patient_id = "S" + std::to_string(100 + i);
        const int y = i % 3 ? 1 : 0;
        p.idh1_label = label_from_index(y);
        p.age_years = static_cast<int>(30 + rng() % 40);
        p.sex = rng() % 2 ? "female" : "male";
        cases.push_back(p);
        Embedding report{p.patient_id, std::vector<double>(16), Modality::report};
        Embedding slide{p.patient_id, std::vector<double>(768), Modality::slide};
        Embedding clinical{p.patient_id, std::vector<double>(8), Modality::clinical_text};
        for (auto& x : report.vector) x = g(rng);
        for (auto& x : slide.vector) x = g(rng);
        for (auto& x : clinical.vector) x = g(rng);
        report.vector[0] += y ? 1.5 : -1.5;
        slide.vector[0] += y ? 1.5 : -1.5;
        slide.vector[5] = 2.0;  // constant column
        c.sources.fixed[Modality::report][p.patient_id] = report;
        c.sources.fixed[Modality::slide][p.patient_id] = slide;
        c.sources.fixed[Modality::clinical_text][p.patient_id] = clinical;
    }
    c.manifest = make_manifest(cases);
    return c;
}

mlp::TrainConfig quick_train() {
    mlp::TrainConfig t;
    t.learning_rate = 1e-3;
    t.epochs = 15;
    return t;
}

}  // namespace

TEST_CASE("metric spot values") {
    CHECK(f1_from_counts(3, 1, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(std::abs(f1_from_counts(3, 1, 2) - 0.6667) < 5e-5);
    CHECK(f1_from_counts(0, 2, 1) == 0.0);
    CHECK(f1_score({0, 0, 0}, {0, 0, 0}) == 1.0);
    CHECK(f1_score({1, 0, 1}, {1, 0, 1}) == 1.0);
    CHECK(f1_score({1, 1, 1, 1, 0, 0, 0}, {1, 1, 1, 0, 1, 1, 0}) == doctest::Approx(2.0 / 3.0));
    CHECK(f1_score({1, 0}, {0, 0}, 0) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS(f1_score({}, {}));

    CHECK(accuracy({1, 0, 1, 1}, {1, 0, 0, 1}) == 0.75);
    CHECK(accuracy({1, 1}, {1, 1}) == 1.0);
    CHECK_THROWS(accuracy({}, {}));
    CHECK_THROWS(accuracy({1}, {1, 0}));

    CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75);
    CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    CHECK_THROWS(auroc({0.1, 0.2}, {1, 1}));
}

TEST_CASE("rank AUROC equals brute-force pair counting") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        const int levels = 1 + static_cast<int>(rng() % 20);  // few levels force ties
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng() % levels) / levels;
            labels[i] = static_cast<int>(rng() % 2);
        }
        labels[0] = 0;
        labels[1] = 1;
        const double a = auroc(scores, labels);
        CHECK(std::abs(a - brute_force_auroc(scores, labels)) < 1e-12);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("stratified folds on 374/114") {
    const auto labels = label_map(374, 114);
    const auto s = stratified_folds(labels, 5, 0);
    CHECK(s.assignments.size() == 488);
    std::vector<std::size_t> mutant, wildtype, sizes;
    for (const auto& [fold, c] : per_fold_counts(s, labels)) {
        mutant.push_back(c[1]);
        wildtype.push_back(c[0]);
        sizes.push_back(c[0] + c[1]);
    }
    std::sort(mutant.rbegin(), mutant.rend());
    std::sort(wildtype.rbegin(), wildtype.rend());
    std::sort(sizes.rbegin(), sizes.rend());
    CHECK(mutant == std::vector<std::size_t>{75, 75, 75, 75, 74});
    CHECK(wildtype == std::vector<std::size_t>{23, 23, 23, 23, 22});
    CHECK(sizes.front() - sizes.back() <= 1);

    CHECK(s.assignments == stratified_folds(labels, 5, 0).assignments);
    CHECK(s.assignments != stratified_folds(labels, 5, 1).assignments);
    for (int f = 0; f < 5; ++f) {
        CHECK(s.held_out(f).size() + s.training(f).size() == 488);
    }
}

TEST_CASE("ten samples split one per class per fold") {
    const auto labels = label_map(5, 5);
    for (const auto& [fold, c] : per_fold_counts(stratified_folds(labels, 5, 3), labels)) {
        CHECK(c[0] == 1);
        CHECK(c[1] == 1);
    }
    CHECK_THROWS(stratified_folds(label_map(10, 4), 5, 0));
    CHECK_THROWS(stratified_folds(label_map(10, 10), 1, 0));
}

TEST_CASE("per-class fold counts differ by at most one on random profiles") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 9);
        const std::size_t m = k + rng() % 300, w = k + rng() % 300;
        const auto labels = label_map(m, w);
        const auto s = stratified_folds(labels, k, rng());
        const auto counts = per_fold_counts(s, labels);
        REQUIRE(counts.size() == static_cast<std::size_t>(k));
        for (int cls = 0; cls < 2; ++cls) {
            std::size_t lo = SIZE_MAX, hi = 0;
            for (const auto& [f, c] : counts) {
                lo = std::min(lo, c[cls]);
                hi = std::max(hi, c[cls]);
            }
            CHECK(hi - lo <= 1);
        }
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto& [f, c] : counts) {
            lo = std::min(lo, c[0] + c[1]);
            hi = std::max(hi, c[0] + c[1]);
        }
        CHECK(hi - lo <= 1);
    }
}

TEST_CASE("aggregate uses population std") {
    const auto [mean, sd] = aggregate({{0.5, 0.6, 0.7}, {0.7, 0.8, 0.9}});
    CHECK(mean.accuracy == doctest::Approx(0.6));
    CHECK(sd.accuracy == doctest::Approx(0.1));
    CHECK(sd.auroc == doctest::Approx(0.1));
}

TEST_CASE("experiment names and fused modality layout") {
    CHECK(all_experiments().size() == 6);
    for (auto k : all_experiments()) CHECK(parse_experiment(to_string(k)) == k);
    CHECK_THROWS(parse_experiment("best_model"));
    CHECK(feature_modalities(ExperimentKind::moa_with_histology) == std::vector<Modality>{Modality::report, Modality::slide});
    CHECK(feature_modalities(ExperimentKind::histology_plus_clinical) ==
          std::vector<Modality>{Modality::one_hot, Modality::slide});
}

TEST_CASE("run_experiment audits folds and is reproducible") {
    const auto c = synthetic_cohort(90, 5);
    std::map<std::string, Idh1Label> labels;
    for (const auto& p : c.manifest.cases) labels[p.patient_id] = *p.idh1_label;
    const auto folds = stratified_folds(labels, 5, 11);
    ExperimentOptions opts;
    opts.hidden_dims = {16, 8, 4};
    opts.seed = 11;

    const auto fused = run_experiment(ExperimentKind::moa_with_histology, c.sources, c.manifest, folds, quick_train(), opts);
    CHECK(fused.result.input_dim == 16 + 768);
    REQUIRE(fused.result.per_fold.size() == 5);
    REQUIRE(fused.audits.size() == 5);
    for (const auto& a : fused.audits) {
        CHECK(a.leaked == 0);
        for (const auto& id : a.held_out) CHECK_FALSE(a.fitted_on.contains(id));
        CHECK(a.fitted_on.size() + a.held_out.size() == 90);
        CHECK(a.max_abs_train_mean < 1e-9);
        CHECK(a.max_abs_train_std_error < 1e-9);
        CHECK(a.degenerate_dims >= 1);
    }
    for (const auto& m : fused.result.per_fold) {
        for (double v : {m.accuracy, m.f1, m.auroc}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    const auto [mean, sd] = aggregate(fused.result.per_fold);
    CHECK(std::abs(mean.auroc - fused.result.mean.auroc) < 1e-12);
    CHECK(std::abs(sd.f1 - fused.result.std.f1) < 1e-12);

    const auto again = run_experiment(ExperimentKind::moa_with_histology, c.sources, c.manifest, folds, quick_train(), opts);
    CHECK(again.result.to_json().dump() == fused.result.to_json().dump());
    opts.workers = 3;
    const auto parallel = run_experiment(ExperimentKind::moa_with_histology, c.sources, c.manifest, folds, quick_train(), opts);
    CHECK(parallel.result.to_json().dump() == fused.result.to_json().dump());

    const auto record = ExperimentResult::from_json(fused.result.to_json());
    CHECK(record.to_json() == fused.result.to_json());

    const auto onehot = run_experiment(ExperimentKind::clinical_onehot, c.sources, c.manifest, folds, quick_train(), opts);
    CHECK(onehot.result.per_fold.size() == 5);
    for (const auto& a : onehot.audits) CHECK(a.leaked == 0);

    const auto table = format_table({fused.result, onehot.result});
    CHECK(table.find("±") != std::string::npos);
    CHECK(table.find(std::string(display_name(ExperimentKind::moa_with_histology))) != std::string::npos);
}

TEST_CASE("missing feature vectors are reported by id") {
    auto c = synthetic_cohort(30, 6);
    c.sources.fixed[Modality::slide].erase("S105");
    c.sources.fixed[Modality::slide].erase("S117");
    std::map<std::string, Idh1Label> labels;
    for (const auto& p : c.manifest.cases) labels[p.patient_id] = *p.idh1_label;
    const auto folds = stratified_folds(labels, 5, 1);
    try {
        run_experiment(ExperimentKind::histology, c.sources, c.manifest, folds, quick_train());
        FAIL("expected error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("S105") != std::string::npos);
        CHECK(msg.find("S117") != std::string::npos);
    }
}
