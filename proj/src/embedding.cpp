#include "moa/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "moa/errors.hpp"
#include "moa/io.hpp"

namespace moa {

using nlohmann::json;

std::string_view to_string(Modality modality) {
    switch (modality) {
        case Modality::report: return "report";
        case Modality::clinical_text: return "clinical_text";
        case Modality::one_hot: return "one_hot";
        case Modality::slide: return "slide";
        case Modality::fused: return "fused";
    }
    return "report";
}

Modality parse_modality(std::string_view text) {
    for (auto m : {Modality::report, Modality::clinical_text, Modality::one_hot, Modality::slide,
                   Modality::fused}) {
        if (to_string(m) == text) return m;
    }
    throw ParseError("unknown modality '" + std::string(text) + "'");
}

void Embedding::validate() const {
    if (vector.empty()) throw ValidationError("embedding '" + id + "' has an empty vector");
    for (std::size_t i = 0; i < vector.size(); ++i) {
        if (!std::isfinite(vector[i])) {
            throw ValidationError("embedding '" + id + "' has a non-finite value at index " +
                                  std::to_string(i));
        }
    }
}

NormalizationStats fit_normalizer(const std::vector<Embedding>& embeddings) {
    if (embeddings.empty()) throw PreconditionError("fit_normalizer: no embeddings");
    const std::size_t dim = embeddings.front().dim();
    NormalizationStats stats;
    stats.mean.assign(dim, 0.0);
    stats.stddev.assign(dim, 0.0);
    for (const auto& e : embeddings) {
        if (e.dim() != dim) {
            throw DimensionError("fit_normalizer: embedding '" + e.id + "' has dimension " +
                                 std::to_string(e.dim()) + ", expected " + std::to_string(dim));
        }
        stats.fitted_on.insert(e.id);
    }
    const auto n = static_cast<double>(embeddings.size());
    for (const auto& e : embeddings) {
        for (std::size_t j = 0; j < dim; ++j) stats.mean[j] += e.vector[j];
    }
    for (auto& m : stats.mean) m /= n;
    // Two-pass variance around the fitted mean.
    for (const auto& e : embeddings) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = e.vector[j] - stats.mean[j];
            stats.stddev[j] += d * d;
        }
    }
    for (auto& s : stats.stddev) s = std::sqrt(s / n);
    return stats;
}

Embedding apply_normalizer(const NormalizationStats& stats, const Embedding& e) {
    if (e.dim() != stats.dim()) {
        throw DimensionError("apply_normalizer: embedding '" + e.id + "' has dimension " +
                             std::to_string(e.dim()) + ", stats expect " +
                             std::to_string(stats.dim()));
    }
    Embedding out{e.id, std::vector<double>(e.dim()), e.modality};
    for (std::size_t j = 0; j < e.dim(); ++j) {
        out.vector[j] = (e.vector[j] - stats.mean[j]) / std::max(stats.stddev[j], kStdEpsilon);
    }
    return out;
}

Embedding fuse_concat(const Embedding& a, const Embedding& b) {
    if (a.id != b.id) {
        throw ValidationError("fuse_concat: id mismatch '" + a.id + "' vs '" + b.id + "'");
    }
    Embedding out{a.id, a.vector, Modality::fused};
    out.vector.insert(out.vector.end(), b.vector.begin(), b.vector.end());
    return out;
}

void save_embeddings(const std::filesystem::path& path, const std::vector<Embedding>& embeddings) {
    std::string text;
    for (const auto& e : embeddings) {
        e.validate();
        json record = {{"id", e.id}, {"modality", to_string(e.modality)}, {"vector", e.vector}};
        text += io::dump_line(record);
        text += '\n';
    }
    io::write_file(path, text);
}

std::vector<Embedding> load_embeddings(const std::filesystem::path& path) {
    std::vector<Embedding> out;
    io::for_each_jsonl(path, [&](std::size_t line, const json& record) {
        const auto where = path.string() + ":" + std::to_string(line);
        try {
            Embedding e;
            e.id = record.at("id").get<std::string>();
            e.modality = parse_modality(record.at("modality").get<std::string>());
            for (const auto& v : record.at("vector")) {
                if (!v.is_number()) throw ParseError("vector entry is not a finite number");
                e.vector.push_back(v.get<double>());
            }
            e.validate();
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ParseError(where + ": " + ex.what());
        } catch (const Error& ex) {
            throw ParseError(where + ": " + ex.what());
        }
    });
    return out;
}

void save_stats(const std::filesystem::path& path, const NormalizationStats& stats) {
    json record = {{"mean", stats.mean},
                   {"std", stats.stddev},
                   {"fitted_on", std::vector<std::string>(stats.fitted_on.begin(),
                                                          stats.fitted_on.end())}};
    io::write_file(path, record.dump(2) + "\n");
}

NormalizationStats load_stats(const std::filesystem::path& path) {
    try {
        const json record = json::parse(io::read_file(path));
        NormalizationStats stats;
        stats.mean = record.at("mean").get<std::vector<double>>();
        stats.stddev = record.at("std").get<std::vector<double>>();
        for (const auto& id : record.at("fitted_on")) stats.fitted_on.insert(id.get<std::string>());
        if (stats.mean.size() != stats.stddev.size()) throw ParseError("mean/std length differ");
        for (double s : stats.stddev) {
            if (!(s >= 0.0)) throw ParseError("negative std");
        }
        return stats;
    } catch (const json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
}

}  // namespace moa
