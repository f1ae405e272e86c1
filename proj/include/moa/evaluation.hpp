#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "moa/classifier.hpp"
#include "moa/core.hpp"

namespace moa::eval {

struct FoldSplit {
    int n_folds = 0;
    std::map<std::string, int> assignments;
    std::uint64_t seed = 0;

    std::vector<std::string> held_out(int fold) const;
    std::vector<std::string> training(int fold) const;
};

/// Per-class seeded shuffle, then round-robin fold assignment. The round-robin
/// position carries over from one class to the next (classes in label order),
/// so both per-class counts and total fold sizes differ by at most one.
FoldSplit stratified_folds(const std::map<std::string, Idh1Label>& labels, int n_folds,
                           std::uint64_t seed);

/// Labels and predictions use class indices (1 = mutant, the positive class).
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Binary F1 for `positive_class`. 0 when TP = 0 but FP + FN > 0; 1 when the
/// positive class never occurs in either vector.
double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels,
                int positive_class = 1);
double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Mann-Whitney statistic with average ranks for tied scores. Positives are label 1.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Metrics {
    double accuracy = 0.0;
    double f1 = 0.0;
    double auroc = 0.0;
};

enum class ExperimentKind {
    clinical_text,
    clinical_onehot,
    moa_no_histology,
    histology,
    histology_plus_clinical,
    moa_with_histology,
};

const std::vector<ExperimentKind>& all_experiments();
std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);
/// Modalities concatenated, in order, to form the classifier input.
std::vector<Modality> feature_modalities(ExperimentKind kind);
std::string_view display_name(ExperimentKind kind);
std::string_view encoder_name(ExperimentKind kind);

struct ExperimentResult {
    std::string config_name;
    std::size_t input_dim = 0;
    std::vector<Metrics> per_fold;
    Metrics mean;
    Metrics std;  // population std over folds

    nlohmann::json to_json() const;
    static ExperimentResult from_json(const nlohmann::json& record);
};

/// Mean and population standard deviation of each metric.
std::pair<Metrics, Metrics> aggregate(const std::vector<Metrics>& per_fold);

/// Fixed per-patient vectors by modality. One-hot vectors are derived per fold
/// from the manifest, because their vocabulary depends on the training fold.
struct FeatureSources {
    std::map<Modality, std::map<std::string, Embedding>> fixed;
};

/// Leakage and normalization diagnostics recorded for one fold.
struct FoldAudit {
    int fold = 0;
    std::set<std::string> fitted_on;
    std::set<std::string> held_out;
    std::size_t leaked = 0;  // |fitted_on ∩ held_out|
    double max_abs_train_mean = 0.0;
    double max_abs_train_std_error = 0.0;  // max |std - 1| over non-degenerate dims
    std::size_t degenerate_dims = 0;

    nlohmann::json to_json() const;
};

struct ExperimentOptions {
    std::array<std::size_t, 3> hidden_dims = mlp::kDefaultHiddenDims;
    std::uint64_t seed = 0;
    /// Folds trained concurrently; results do not depend on this.
    std::size_t workers = 1;
};

struct ExperimentRun {
    ExperimentResult result;
    std::vector<FoldAudit> audits;
};

ExperimentRun run_experiment(ExperimentKind kind, const FeatureSources& sources,
                             const CohortManifest& manifest, const FoldSplit& folds,
                             const mlp::TrainConfig& train_config,
                             const ExperimentOptions& options = {});

/// Table with one row per result: component, encoder, model, accuracy, F1, AUROC (mean ± std).
std::string format_table(const std::vector<ExperimentResult>& results,
                         const std::map<ExperimentKind, std::string>& encoder_override = {});

}  // namespace moa::eval
