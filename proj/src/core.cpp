#include "moa/core.hpp"

#include <algorithm>
#include <sstream>

#include "moa/errors.hpp"
#include "moa/io.hpp"
#include "moa/log.hpp"

namespace moa {

using nlohmann::json;

std::string_view to_string(Idh1Label label) {
    return label == Idh1Label::mutant ? "mutant" : "wildtype";
}

Idh1Label parse_label(std::string_view text) {
    if (text == "mutant") return Idh1Label::mutant;
    if (text == "wildtype") return Idh1Label::wildtype;
    throw ParseError("unknown IDH1 label '" + std::string(text) + "'");
}

std::string_view to_string(Oncogenicity value) {
    switch (value) {
        case Oncogenicity::oncogenic: return "oncogenic";
        case Oncogenicity::likely_oncogenic: return "likely-oncogenic";
        case Oncogenicity::unknown: return "unknown";
    }
    return "unknown";
}

Oncogenicity parse_oncogenicity(std::string_view text) {
    if (text == "oncogenic") return Oncogenicity::oncogenic;
    if (text == "likely-oncogenic") return Oncogenicity::likely_oncogenic;
    if (text == "unknown") return Oncogenicity::unknown;
    throw ParseError("unknown oncogenicity '" + std::string(text) + "'");
}

bool PatientCase::has_clinical_fields() const {
    return age_years || sex || tumor_class || histologic_morphology || treatment_type ||
           therapeutic_procedure;
}

bool PatientCase::has_field(std::string_view field) const {
    if (field == "patient_id") return !patient_id.empty();
    if (field == "age_years") return age_years.has_value();
    if (field == "sex") return sex.has_value();
    if (field == "tumor_class") return tumor_class.has_value();
    if (field == "histologic_morphology") return histologic_morphology.has_value();
    if (field == "treatment_type") return treatment_type.has_value();
    if (field == "therapeutic_procedure") return therapeutic_procedure.has_value();
    if (field == "molecular_summary") return molecular_summary && !molecular_summary->empty();
    if (field == "slide_feature_path") return slide_feature_path.has_value();
    if (field == "idh1_label") return idh1_label.has_value();
    return false;
}

const std::vector<std::string>& patient_case_fields() {
    static const std::vector<std::string> fields = {
        "patient_id",     "age_years",          "sex",
        "tumor_class",    "histologic_morphology", "treatment_type",
        "therapeutic_procedure", "molecular_summary", "slide_feature_path",
        "idh1_label"};
    return fields;
}

json to_json(const PatientCase& c) {
    json j = {{"patient_id", c.patient_id}};
    if (c.age_years) j["age_years"] = *c.age_years;
    if (c.sex) j["sex"] = *c.sex;
    if (c.tumor_class) j["tumor_class"] = *c.tumor_class;
    if (c.histologic_morphology) j["histologic_morphology"] = *c.histologic_morphology;
    if (c.treatment_type) j["treatment_type"] = *c.treatment_type;
    if (c.therapeutic_procedure) j["therapeutic_procedure"] = *c.therapeutic_procedure;
    if (c.molecular_summary) {
        json list = json::array();
        for (const auto& a : *c.molecular_summary) {
            list.push_back({{"gene_symbol", a.gene_symbol},
                            {"alteration", a.alteration},
                            {"oncogenicity", to_string(a.oncogenicity)},
                            {"source", a.source}});
        }
        j["molecular_summary"] = std::move(list);
    }
    if (c.slide_feature_path) j["slide_feature_path"] = c.slide_feature_path->generic_string();
    if (c.idh1_label) j["idh1_label"] = to_string(*c.idh1_label);
    return j;
}

namespace {

std::optional<std::string> optional_string(const json& record, const char* key) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

GeneAnnotation annotation_from_json(const json& j) {
    static const std::set<std::string> allowed = {"gene_symbol", "alteration", "oncogenicity",
                                                  "source"};
    if (!j.is_object()) throw ParseError("molecular_summary entries must be objects");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) throw ParseError("unknown annotation key '" + key + "'");
    }
    GeneAnnotation a;
    a.gene_symbol = j.at("gene_symbol").get<std::string>();
    if (a.gene_symbol.empty()) throw ParseError("annotation gene_symbol is empty");
    a.alteration = j.value("alteration", std::string{});
    a.oncogenicity = parse_oncogenicity(j.value("oncogenicity", std::string{"unknown"}));
    a.source = j.value("source", std::string{});
    return a;
}

}  // namespace

PatientCase case_from_json(const json& record) {
    if (!record.is_object()) throw ParseError("record is not an object");
    const auto& fields = patient_case_fields();
    for (const auto& [key, _] : record.items()) {
        if (std::find(fields.begin(), fields.end(), key) == fields.end()) {
            throw ParseError("unknown key '" + key + "'");
        }
    }
    PatientCase c;
    try {
        c.patient_id = record.at("patient_id").get<std::string>();
    } catch (const json::exception&) {
        throw ParseError("missing or non-string patient_id");
    }
    if (c.patient_id.empty()) throw ParseError("empty patient_id");
    if (auto it = record.find("age_years"); it != record.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<long long>() < 0) {
            throw ParseError("age_years must be a non-negative integer");
        }
        c.age_years = it->get<int>();
    }
    c.sex = optional_string(record, "sex");
    c.tumor_class = optional_string(record, "tumor_class");
    c.histologic_morphology = optional_string(record, "histologic_morphology");
    c.treatment_type = optional_string(record, "treatment_type");
    c.therapeutic_procedure = optional_string(record, "therapeutic_procedure");
    if (auto it = record.find("molecular_summary"); it != record.end() && !it->is_null()) {
        if (!it->is_array()) throw ParseError("molecular_summary must be a list");
        std::vector<GeneAnnotation> list;
        for (const auto& entry : *it) {
            try {
                list.push_back(annotation_from_json(entry));
            } catch (const json::exception& e) {
                throw ParseError(std::string("bad annotation: ") + e.what());
            }
        }
        c.molecular_summary = std::move(list);
    }
    if (auto path = optional_string(record, "slide_feature_path")) c.slide_feature_path = *path;
    if (auto label = optional_string(record, "idh1_label")) c.idh1_label = parse_label(*label);
    return c;
}

std::vector<const PatientCase*> CohortManifest::eligible_cases() const {
    std::vector<const PatientCase*> out;
    for (const auto& c : cases) {
        if (c.eligible()) out.push_back(&c);
    }
    return out;
}

const PatientCase* CohortManifest::find(std::string_view patient_id) const {
    for (const auto& c : cases) {
        if (c.patient_id == patient_id) return &c;
    }
    return nullptr;
}

CohortManifest make_manifest(std::vector<PatientCase> cases) {
    CohortManifest m;
    std::set<std::string> seen;
    std::set<std::string> duplicates;
    for (const auto& c : cases) {
        if (c.patient_id.empty()) throw ValidationError("case with empty patient_id");
        if (!seen.insert(c.patient_id).second) duplicates.insert(c.patient_id);
    }
    if (!duplicates.empty()) {
        std::string list;
        for (const auto& id : duplicates) list += (list.empty() ? "" : ", ") + id;
        throw ValidationError("duplicate patient_id: " + list);
    }
    m.class_counts = {{Idh1Label::mutant, 0}, {Idh1Label::wildtype, 0}};
    for (const auto& c : cases) {
        if (c.idh1_label) {
            ++m.class_counts[*c.idh1_label];
        } else {
            m.ineligible_ids.push_back(c.patient_id);
        }
        if (!c.has_clinical_fields()) {
            m.warnings.push_back("case " + c.patient_id + " has no demographic, diagnostic or treatment fields");
        }
    }
    if (cases.empty()) m.warnings.emplace_back("cohort is empty");
    if (!m.ineligible_ids.empty()) {
        m.warnings.push_back(std::to_string(m.ineligible_ids.size()) +
                             " case(s) lack idh1_label and are evaluation-ineligible");
    }
    m.cases = std::move(cases);
    for (const auto& w : m.warnings) log::warn("cohort_warning", {{"message", w}});
    return m;
}

CohortManifest load_cohort(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("cases file not found: " + path.string());
    std::vector<PatientCase> cases;
    std::size_t index = 0;
    const auto base = path.parent_path();
    io::for_each_jsonl(path, [&](std::size_t line, const json& record) {
        try {
            auto c = case_from_json(record);
            if (c.slide_feature_path && c.slide_feature_path->is_relative()) {
                c.slide_feature_path = base / *c.slide_feature_path;
            }
            cases.push_back(std::move(c));
        } catch (const Error& e) {
            throw ParseError("record " + std::to_string(index) + " (" + path.string() + ":" +
                             std::to_string(line) + "): " + e.what());
        }
        ++index;
    });
    return make_manifest(std::move(cases));
}

void save_cohort(const std::filesystem::path& path, const std::vector<PatientCase>& cases) {
    std::string text;
    for (const auto& c : cases) text += io::dump_line(to_json(c)) + "\n";
    io::write_file(path, text);
}

std::string build_clinical_text(const PatientCase& c) {
    const std::array<std::optional<std::string>, 6> values = {
        c.age_years ? std::optional<std::string>(std::to_string(*c.age_years)) : std::nullopt,
        c.sex,
        c.tumor_class,
        c.histologic_morphology,
        c.treatment_type,
        c.therapeutic_procedure};
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i]) continue;
        if (!out.empty()) out += ' ';
        out += kClinicalTextKeys[i];
        out += ": ";
        out += *values[i];
        out += '.';
    }
    if (out.empty()) log::warn("empty_clinical_text", {{"patient_id", c.patient_id}});
    return out;
}

std::optional<std::string> build_molecular_summary(const PatientCase& c,
                                                   const std::set<std::string>& allowed_genes) {
    if (allowed_genes.empty()) throw PreconditionError("allowed_genes must not be empty");
    if (!c.molecular_summary) return std::nullopt;
    std::string out;
    for (const auto& a : *c.molecular_summary) {
        if (!allowed_genes.contains(a.gene_symbol) || a.oncogenicity == Oncogenicity::unknown) {
            continue;
        }
        if (!out.empty()) out += ' ';
        out += a.gene_symbol;
        if (!a.alteration.empty()) out += ' ' + a.alteration;
        out += ": ";
        out += to_string(a.oncogenicity);
        out += '.';
    }
    if (out.empty()) return std::nullopt;
    return out;
}

const std::array<std::string_view, 5> OneHotVocabulary::kCategoricalVariables = {
    "sex", "tumor_class", "histologic_morphology", "treatment_type", "therapeutic_procedure"};

namespace {

std::array<const std::optional<std::string>*, 5> categorical_values(const PatientCase& c) {
    return {&c.sex, &c.tumor_class, &c.histologic_morphology, &c.treatment_type,
            &c.therapeutic_procedure};
}

}  // namespace

std::size_t OneHotVocabulary::dim() const {
    std::size_t d = kAgeBins;
    for (const auto& v : categories) d += v.size();
    return d;
}

OneHotVocabulary build_vocabulary(const CohortManifest& manifest,
                                  const std::set<std::string>& training_ids) {
    if (training_ids.empty()) throw PreconditionError("one-hot encoding needs a non-empty training set");
    std::array<std::set<std::string>, 5> seen;
    std::size_t found = 0;
    for (const auto& c : manifest.cases) {
        if (!training_ids.contains(c.patient_id)) continue;
        ++found;
        const auto values = categorical_values(c);
        for (std::size_t v = 0; v < values.size(); ++v) {
            if (*values[v]) seen[v].insert(**values[v]);
        }
    }
    if (found != training_ids.size()) {
        throw PreconditionError("training ids are not a subset of the cohort");
    }
    OneHotVocabulary vocab;
    for (std::size_t v = 0; v < seen.size(); ++v) {
        vocab.categories[v].assign(seen[v].begin(), seen[v].end());
    }
    return vocab;
}

std::vector<double> one_hot_block(const std::optional<std::string>& value,
                                  const std::vector<std::string>& vocabulary) {
    std::vector<double> block(vocabulary.size(), 0.0);
    if (!value) return block;
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), *value);
    if (it != vocabulary.end() && *it == *value) block[static_cast<std::size_t>(it - vocabulary.begin())] = 1.0;
    return block;
}

std::size_t age_bin(int age_years) {
    return static_cast<std::size_t>(std::clamp(age_years / 10, 0, 9));
}

Embedding one_hot_encode(const PatientCase& c, const OneHotVocabulary& vocabulary) {
    Embedding e{c.patient_id, {}, Modality::one_hot};
    e.vector.reserve(vocabulary.dim());
    std::vector<double> age(OneHotVocabulary::kAgeBins, 0.0);
    if (c.age_years) age[age_bin(*c.age_years)] = 1.0;
    e.vector.insert(e.vector.end(), age.begin(), age.end());
    const auto values = categorical_values(c);
    for (std::size_t v = 0; v < values.size(); ++v) {
        auto block = one_hot_block(*values[v], vocabulary.categories[v]);
        e.vector.insert(e.vector.end(), block.begin(), block.end());
    }
    return e;
}

std::map<std::string, Embedding> one_hot_encode_cohort(const CohortManifest& manifest,
                                                       const std::set<std::string>& training_ids) {
    const auto vocab = build_vocabulary(manifest, training_ids);
    std::map<std::string, Embedding> out;
    for (const auto& c : manifest.cases) out.emplace(c.patient_id, one_hot_encode(c, vocab));
    return out;
}

}  // namespace moa
