#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "moa/embedding.hpp"

namespace moa {

enum class Idh1Label { mutant, wildtype };

std::string_view to_string(Idh1Label label);
Idh1Label parse_label(std::string_view text);

/// Class index used by the classifier: wildtype = 0, mutant = 1 (the positive class).
constexpr int class_index(Idh1Label label) { return label == Idh1Label::mutant ? 1 : 0; }
constexpr Idh1Label label_from_index(int index) {
    return index == 1 ? Idh1Label::mutant : Idh1Label::wildtype;
}

enum class Oncogenicity { oncogenic, likely_oncogenic, unknown };

std::string_view to_string(Oncogenicity value);
Oncogenicity parse_oncogenicity(std::string_view text);

struct GeneAnnotation {
    std::string gene_symbol;
    std::string alteration;
    Oncogenicity oncogenicity = Oncogenicity::unknown;
    std::string source;

    bool operator==(const GeneAnnotation&) const = default;
};

struct PatientCase {
    std::string patient_id;
    std::optional<int> age_years;
    std::optional<std::string> sex;
    std::optional<std::string> tumor_class;
    std::optional<std::string> histologic_morphology;
    std::optional<std::string> treatment_type;
    std::optional<std::string> therapeutic_procedure;
    std::optional<std::vector<GeneAnnotation>> molecular_summary;
    std::optional<std::filesystem::path> slide_feature_path;
    std::optional<Idh1Label> idh1_label;

    /// True when any demographic, diagnostic or treatment field is set.
    bool has_clinical_fields() const;
    bool eligible() const { return idh1_label.has_value(); }

    /// Whether the named record field is present (used for tool gating).
    bool has_field(std::string_view field) const;

    bool operator==(const PatientCase&) const = default;
};

/// Record field names, in file order.
const std::vector<std::string>& patient_case_fields();

nlohmann::json to_json(const PatientCase& c);
/// Strict decode: unknown keys and wrongly typed values throw ParseError.
PatientCase case_from_json(const nlohmann::json& record);

struct CohortManifest {
    std::vector<PatientCase> cases;
    std::map<Idh1Label, std::size_t> class_counts;
    /// Cases without an IDH1 label; kept but excluded from training and evaluation.
    std::vector<std::string> ineligible_ids;
    std::vector<std::string> warnings;

    std::vector<const PatientCase*> eligible_cases() const;
    const PatientCase* find(std::string_view patient_id) const;
};

/// Validates uniqueness and recomputes class counts. Throws ValidationError on duplicates.
CohortManifest make_manifest(std::vector<PatientCase> cases);

/// Reads the line-delimited patient-case file. Relative slide paths are resolved
/// against the file's directory.
CohortManifest load_cohort(const std::filesystem::path& path);
void save_cohort(const std::filesystem::path& path, const std::vector<PatientCase>& cases);

/// "Key: value." sentence template, applied in this field order.
inline constexpr std::array<std::string_view, 6> kClinicalTextKeys = {
    "Age", "Sex", "Tumor class", "Histologic morphology", "Treatment type",
    "Therapeutic procedure"};

std::string build_clinical_text(const PatientCase& c);

inline const std::set<std::string> kDefaultAllowedGenes = {"TP53", "CIC"};

std::optional<std::string> build_molecular_summary(
    const PatientCase& c, const std::set<std::string>& allowed_genes = kDefaultAllowedGenes);

/// Categorical vocabulary for the one-hot baseline. Age uses fixed decade bins
/// [0-9] ... [80-89], [90+]; every other variable uses the sorted set of values
/// observed in the training cases.
struct OneHotVocabulary {
    static constexpr std::size_t kAgeBins = 10;
    static const std::array<std::string_view, 5> kCategoricalVariables;

    std::array<std::vector<std::string>, 5> categories;

    std::size_t dim() const;
    bool operator==(const OneHotVocabulary&) const = default;
};

OneHotVocabulary build_vocabulary(const CohortManifest& manifest,
                                  const std::set<std::string>& training_ids);

/// One block: indicator of `value` in `vocabulary`; all zeros for absent or unseen values.
std::vector<double> one_hot_block(const std::optional<std::string>& value,
                                  const std::vector<std::string>& vocabulary);

std::size_t age_bin(int age_years);

Embedding one_hot_encode(const PatientCase& c, const OneHotVocabulary& vocabulary);

std::map<std::string, Embedding> one_hot_encode_cohort(const CohortManifest& manifest,
                                                       const std::set<std::string>& training_ids);

}  // namespace moa
