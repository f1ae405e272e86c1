#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace moa {

enum class Modality { report, clinical_text, one_hot, slide, fused };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);

/// A fixed-length real vector tagged with the patient (or chunk) it belongs to.
struct Embedding {
    std::string id;
    std::vector<double> vector;
    Modality modality = Modality::report;

    std::size_t dim() const { return vector.size(); }

    /// Throws ValidationError if the vector is empty or holds a non-finite entry.
    void validate() const;

    bool operator==(const Embedding&) const = default;
};

/// Per-dimension z-score statistics fitted on a training fold.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population
    std::set<std::string> fitted_on;

    std::size_t dim() const { return mean.size(); }
};

/// Guard used in place of a zero standard deviation.
inline constexpr double kStdEpsilon = 1e-8;

NormalizationStats fit_normalizer(const std::vector<Embedding>& embeddings);
Embedding apply_normalizer(const NormalizationStats& stats, const Embedding& e);

/// Concatenates `a` then `b`; both must describe the same id.
Embedding fuse_concat(const Embedding& a, const Embedding& b);

/// Line-delimited records {"id","modality","vector"}; doubles are written with
/// shortest round-trip precision.
void save_embeddings(const std::filesystem::path& path, const std::vector<Embedding>& embeddings);
std::vector<Embedding> load_embeddings(const std::filesystem::path& path);

void save_stats(const std::filesystem::path& path, const NormalizationStats& stats);
NormalizationStats load_stats(const std::filesystem::path& path);

}  // namespace moa
