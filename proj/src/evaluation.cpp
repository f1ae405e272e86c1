#include "moa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "moa/errors.hpp"
#include "moa/log.hpp"

namespace moa::eval {

using nlohmann::json;

std::vector<std::string> FoldSplit::held_out(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignments) {
        if (f == fold) out.push_back(id);
    }
    return out;
}

std::vector<std::string> FoldSplit::training(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignments) {
        if (f != fold) out.push_back(id);
    }
    return out;
}

FoldSplit stratified_folds(const std::map<std::string, Idh1Label>& labels, int n_folds,
                           std::uint64_t seed) {
    if (n_folds < 2) throw PreconditionError("stratified_folds: n_folds must be >= 2");
    std::map<Idh1Label, std::vector<std::string>> by_class;
    for (const auto& [id, label] : labels) by_class[label].push_back(id);
    for (const auto& [label, ids] : by_class) {
        if (ids.size() < static_cast<std::size_t>(n_folds)) {
            throw PreconditionError("stratified_folds: class '" + std::string(to_string(label)) +
                                    "' has " + std::to_string(ids.size()) + " members, fewer than " +
                                    std::to_string(n_folds) + " folds");
        }
    }
    FoldSplit split{n_folds, {}, seed};
    std::mt19937_64 rng(seed);
    std::size_t position = 0;
    for (auto& [label, ids] : by_class) {
        std::shuffle(ids.begin(), ids.end(), rng);
        for (const auto& id : ids) {
            split.assignments[id] = static_cast<int>(position % static_cast<std::size_t>(n_folds));
            ++position;
        }
    }
    return split;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty()) throw PreconditionError("accuracy: empty input");
    if (predictions.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    if (tp == 0) return (fp + fn) == 0 ? 1.0 : 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels, int positive_class) {
    if (predictions.empty()) throw PreconditionError("f1_score: empty input");
    if (predictions.size() != labels.size()) throw DimensionError("f1_score: length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = predictions[i] == positive_class;
        const bool actual = labels[i] == positive_class;
        tp += predicted && actual;
        fp += predicted && !actual;
        fn += !predicted && actual;
    }
    return f1_from_counts(tp, fp, fn);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("auroc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y == 1);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw PreconditionError("auroc: both classes must be present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // Positions i..j-1 share the average of ranks i+1..j.
        const double rank = static_cast<double>(i + 1 + j) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) positive_rank_sum += rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

const std::vector<ExperimentKind>& all_experiments() {
    static const std::vector<ExperimentKind> kinds = {
        ExperimentKind::clinical_text,    ExperimentKind::clinical_onehot,
        ExperimentKind::moa_no_histology, ExperimentKind::histology,
        ExperimentKind::histology_plus_clinical, ExperimentKind::moa_with_histology};
    return kinds;
}

std::string_view to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::clinical_text: return "clinical_text";
        case ExperimentKind::clinical_onehot: return "clinical_onehot";
        case ExperimentKind::moa_no_histology: return "moa_no_histology";
        case ExperimentKind::histology: return "histology";
        case ExperimentKind::histology_plus_clinical: return "histology_plus_clinical";
        case ExperimentKind::moa_with_histology: return "moa_with_histology";
    }
    return "";
}

ExperimentKind parse_experiment(std::string_view name) {
    for (auto kind : all_experiments()) {
        if (to_string(kind) == name) return kind;
    }
    throw ValidationError("unknown experiment configuration '" + std::string(name) + "'");
}

std::vector<Modality> feature_modalities(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::clinical_text: return {Modality::clinical_text};
        case ExperimentKind::clinical_onehot: return {Modality::one_hot};
        case ExperimentKind::moa_no_histology: return {Modality::report};
        case ExperimentKind::histology: return {Modality::slide};
        case ExperimentKind::histology_plus_clinical: return {Modality::one_hot, Modality::slide};
        case ExperimentKind::moa_with_histology: return {Modality::report, Modality::slide};
    }
    return {};
}

std::string_view display_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::clinical_text: return "Clinical Text";
        case ExperimentKind::clinical_onehot: return "Clinical Variables";
        case ExperimentKind::moa_no_histology: return "MOA (without Histology)";
        case ExperimentKind::histology: return "Histology Tool";
        case ExperimentKind::histology_plus_clinical: return "Histology Tool + Clinical Variables";
        case ExperimentKind::moa_with_histology: return "MOA (with Histology)";
    }
    return "";
}

std::string_view encoder_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::clinical_text: return "text embedder";
        case ExperimentKind::clinical_onehot: return "One-hot";
        case ExperimentKind::moa_no_histology: return "text embedder";
        case ExperimentKind::histology: return "slide features";
        case ExperimentKind::histology_plus_clinical: return "One-hot + slide features";
        case ExperimentKind::moa_with_histology: return "text embedder + slide features";
    }
    return "";
}

namespace {

json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"f1", m.f1}, {"auroc", m.auroc}};
}

Metrics metrics_from_json(const json& j) {
    return {j.at("accuracy").get<double>(), j.at("f1").get<double>(), j.at("auroc").get<double>()};
}

}  // namespace

json ExperimentResult::to_json() const {
    json folds = json::array();
    for (std::size_t k = 0; k < per_fold.size(); ++k) {
        auto m = metrics_json(per_fold[k]);
        m["fold"] = k;
        folds.push_back(std::move(m));
    }
    return {{"config", config_name},       {"input_dim", input_dim},
            {"n_folds", per_fold.size()},  {"per_fold", std::move(folds)},
            {"mean", metrics_json(mean)},  {"std", metrics_json(std)}};
}

ExperimentResult ExperimentResult::from_json(const json& record) {
    ExperimentResult r;
    r.config_name = record.at("config").get<std::string>();
    r.input_dim = record.at("input_dim").get<std::size_t>();
    for (const auto& f : record.at("per_fold")) r.per_fold.push_back(metrics_from_json(f));
    r.mean = metrics_from_json(record.at("mean"));
    r.std = metrics_from_json(record.at("std"));
    if (record.at("n_folds").get<std::size_t>() != r.per_fold.size()) {
        throw ParseError("result record: n_folds disagrees with per_fold length");
    }
    return r;
}

json FoldAudit::to_json() const {
    return {{"fold", fold},
            {"fitted_on", fitted_on},
            {"held_out", held_out},
            {"leaked", leaked},
            {"max_abs_train_mean", max_abs_train_mean},
            {"max_abs_train_std_error", max_abs_train_std_error},
            {"degenerate_dims", degenerate_dims}};
}

std::pair<Metrics, Metrics> aggregate(const std::vector<Metrics>& per_fold) {
    if (per_fold.empty()) throw PreconditionError("aggregate: no folds");
    const double n = static_cast<double>(per_fold.size());
    Metrics mean, sd;
    for (const auto& m : per_fold) {
        mean.accuracy += m.accuracy;
        mean.f1 += m.f1;
        mean.auroc += m.auroc;
    }
    mean.accuracy /= n;
    mean.f1 /= n;
    mean.auroc /= n;
    for (const auto& m : per_fold) {
        sd.accuracy += (m.accuracy - mean.accuracy) * (m.accuracy - mean.accuracy);
        sd.f1 += (m.f1 - mean.f1) * (m.f1 - mean.f1);
        sd.auroc += (m.auroc - mean.auroc) * (m.auroc - mean.auroc);
    }
    sd.accuracy = std::sqrt(sd.accuracy / n);
    sd.f1 = std::sqrt(sd.f1 / n);
    sd.auroc = std::sqrt(sd.auroc / n);
    return {mean, sd};
}

namespace {

struct FoldOutcome {
    Metrics metrics;
    FoldAudit audit;
    std::size_t input_dim = 0;
};

std::map<std::string, Embedding> assemble_features(ExperimentKind kind, const FeatureSources& sources,
                                                   const CohortManifest& manifest,
                                                   const std::vector<std::string>& ids,
                                                   const std::set<std::string>& training_ids) {
    std::map<std::string, Embedding> out;
    std::map<std::string, Embedding> one_hot;
    for (auto modality : feature_modalities(kind)) {
        const std::map<std::string, Embedding>* table = nullptr;
        if (modality == Modality::one_hot) {
            one_hot = one_hot_encode_cohort(manifest, training_ids);
            table = &one_hot;
        } else {
            auto it = sources.fixed.find(modality);
            if (it == sources.fixed.end()) {
                throw PreconditionError("experiment " + std::string(to_string(kind)) + " needs " +
                                        std::string(to_string(modality)) + " features");
            }
            table = &it->second;
        }
        for (const auto& id : ids) {
            const auto& e = table->at(id);
            auto found = out.find(id);
            if (found == out.end()) {
                out.emplace(id, e);
            } else {
                found->second = fuse_concat(found->second, e);
            }
        }
    }
    return out;
}

FoldOutcome run_fold(ExperimentKind kind, const FeatureSources& sources, const CohortManifest& manifest,
                     const std::map<std::string, int>& labels, const FoldSplit& folds, int fold,
                     const mlp::TrainConfig& base_config, const ExperimentOptions& options) {
    const auto train_ids = folds.training(fold);
    const auto test_ids = folds.held_out(fold);
    const std::set<std::string> train_set(train_ids.begin(), train_ids.end());

    std::vector<std::string> all_ids = train_ids;
    all_ids.insert(all_ids.end(), test_ids.begin(), test_ids.end());
    const auto features = assemble_features(kind, sources, manifest, all_ids, train_set);

    std::vector<Embedding> train_embeddings;
    for (const auto& id : train_ids) train_embeddings.push_back(features.at(id));
    const auto stats = fit_normalizer(train_embeddings);

    FoldOutcome outcome;
    outcome.input_dim = stats.dim();
    auto& audit = outcome.audit;
    audit.fold = fold;
    audit.fitted_on = stats.fitted_on;
    audit.held_out = std::set<std::string>(test_ids.begin(), test_ids.end());
    for (const auto& id : audit.held_out) audit.leaked += audit.fitted_on.contains(id);

    // Dimensions constant on the training fold carry no information and would be
    // scaled by 1/epsilon on held-out rows, so the classifier only sees the rest.
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < stats.dim(); ++j) {
        if (stats.stddev[j] > kStdEpsilon) {
            kept.push_back(j);
        } else {
            ++audit.degenerate_dims;
        }
    }
    if (kept.empty()) throw PreconditionError("every feature dimension is constant on training fold " + std::to_string(fold));
    auto to_rows = [&](const std::vector<std::string>& ids, mlp::Matrix& rows, std::vector<int>& y) {
        rows.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(kept.size()));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto normalized = apply_normalizer(stats, features.at(ids[i]));
            for (std::size_t c = 0; c < kept.size(); ++c) {
                rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = normalized.vector[kept[c]];
            }
            y.push_back(labels.at(ids[i]));
        }
    };
    mlp::Dataset train_data;
    to_rows(train_ids, train_data.features, train_data.labels);

    // Post-normalization moments of the training fold.
    const double n = static_cast<double>(train_ids.size());
    for (Eigen::Index c = 0; c < train_data.features.cols(); ++c) {
        const auto col = train_data.features.col(c);
        const double mean = col.sum() / n;
        const double var = (col.array() - mean).square().sum() / n;
        audit.max_abs_train_mean = std::max(audit.max_abs_train_mean, std::abs(mean));
        audit.max_abs_train_std_error = std::max(audit.max_abs_train_std_error, std::abs(std::sqrt(var) - 1.0));
    }

    mlp::TrainConfig config = base_config;
    config.seed = options.seed + static_cast<std::uint64_t>(fold);
    auto model = mlp::init_model(kept.size(), options.hidden_dims, config.seed);
    auto trained = mlp::train(std::move(model), train_data, config);

    mlp::Matrix test_matrix;
    std::vector<int> test_labels;
    to_rows(test_ids, test_matrix, test_labels);
    const auto probabilities = mlp::predict_proba(trained.model, test_matrix);
    std::vector<int> predictions;
    for (double p : probabilities) predictions.push_back(mlp::predict_mutant(p) ? 1 : 0);
    outcome.metrics = {accuracy(predictions, test_labels), f1_score(predictions, test_labels, 1),
                       auroc(probabilities, test_labels)};
    return outcome;
}

}  // namespace

ExperimentRun run_experiment(ExperimentKind kind, const FeatureSources& sources,
                             const CohortManifest& manifest, const FoldSplit& folds,
                             const mlp::TrainConfig& train_config, const ExperimentOptions& options) {
    train_config.validate();
    std::map<std::string, int> labels;
    for (const auto* c : manifest.eligible_cases()) labels[c->patient_id] = class_index(*c->idh1_label);
    for (const auto& [id, fold] : folds.assignments) {
        if (!labels.contains(id)) throw PreconditionError("fold split names unknown or unlabeled patient " + id);
        if (fold < 0 || fold >= folds.n_folds) throw PreconditionError("fold index out of range for " + id);
    }

    std::vector<std::string> missing;
    for (auto modality : feature_modalities(kind)) {
        if (modality == Modality::one_hot) continue;
        auto it = sources.fixed.find(modality);
        for (const auto& [id, _] : folds.assignments) {
            if (it == sources.fixed.end() || !it->second.contains(id)) {
                missing.push_back(id + " (" + std::string(to_string(modality)) + ")");
            }
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw PreconditionError("missing feature vectors for " + list);
    }

    std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(folds.n_folds));
    const std::size_t workers = std::max<std::size_t>(1, options.workers);
    for (int start = 0; start < folds.n_folds; start += static_cast<int>(workers)) {
        const int stop = std::min(folds.n_folds, start + static_cast<int>(workers));
        if (stop - start == 1) {
            outcomes[static_cast<std::size_t>(start)] =
                run_fold(kind, sources, manifest, labels, folds, start, train_config, options);
            continue;
        }
        std::vector<std::future<FoldOutcome>> pending;
        for (int fold = start; fold < stop; ++fold) {
            pending.push_back(std::async(std::launch::async, [&, fold] {
                return run_fold(kind, sources, manifest, labels, folds, fold, train_config, options);
            }));
        }
        for (int fold = start; fold < stop; ++fold) {
            outcomes[static_cast<std::size_t>(fold)] = pending[static_cast<std::size_t>(fold - start)].get();
        }
    }

    ExperimentRun run;
    run.result.config_name = std::string(to_string(kind));
    for (auto& o : outcomes) {
        run.result.per_fold.push_back(o.metrics);
        run.result.input_dim = o.input_dim;
        run.audits.push_back(std::move(o.audit));
    }
    std::tie(run.result.mean, run.result.std) = aggregate(run.result.per_fold);
    log::info("experiment_done", {{"config", run.result.config_name},
                                  {"accuracy", run.result.mean.accuracy},
                                  {"f1", run.result.mean.f1},
                                  {"auroc", run.result.mean.auroc}});
    return run;
}

std::string format_table(const std::vector<ExperimentResult>& results,
                         const std::map<ExperimentKind, std::string>& encoder_override) {
    struct Row {
        std::string component, encoder, model, acc, f1, auroc;
    };
    auto cell = [](double mean, double sd) {
        std::ostringstream out;
        out << std::fixed << std::setprecision(3) << mean << " ± " << std::setprecision(3) << sd;
        return out.str();
    };
    std::vector<Row> rows = {{"Component Evaluated", "Encoder", "Model", "Accuracy", "F1", "AUROC"}};
    for (const auto& r : results) {
        const auto kind = parse_experiment(r.config_name);
        auto enc = encoder_override.find(kind);
        rows.push_back({std::string(display_name(kind)),
                        enc != encoder_override.end() ? enc->second : std::string(encoder_name(kind)),
                        "MLP", cell(r.mean.accuracy, r.std.accuracy), cell(r.mean.f1, r.std.f1),
                        cell(r.mean.auroc, r.std.auroc)});
    }
    // Width in code points so that "±" does not skew alignment.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
    };
    std::array<std::size_t, 6> widths{};
    for (const auto& row : rows) {
        const std::array<const std::string*, 6> cells = {&row.component, &row.encoder, &row.model,
                                                         &row.acc, &row.f1, &row.auroc};
        for (std::size_t c = 0; c < 6; ++c) widths[c] = std::max(widths[c], width(*cells[c]));
    }
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::array<const std::string*, 6> cells = {&row.component, &row.encoder, &row.model,
                                                         &row.acc, &row.f1, &row.auroc};
        for (std::size_t c = 0; c < 6; ++c) {
            out << (c == 0 ? "| " : " | ") << *cells[c] << std::string(widths[c] - width(*cells[c]), ' ');
        }
        out << " |\n";
        if (r == 0) {
            for (std::size_t c = 0; c < 6; ++c) out << (c == 0 ? "|-" : "-|-") << std::string(widths[c], '-');
            out << "-|\n";
        }
    }
    return out.str();
}

}  // namespace moa::eval
