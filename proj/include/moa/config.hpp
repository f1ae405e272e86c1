#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moa/agent.hpp"
#include "moa/classifier.hpp"
#include "moa/evaluation.hpp"
#include "moa/text_embedder.hpp"

namespace moa {

struct ToolSettings {
    std::string pubmed_base_url = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
    std::string oncokb_base_url = "https://www.oncokb.org/api/v1";
    std::string search_endpoint = "https://www.googleapis.com/customsearch/v1";
    std::string search_engine_id;
    double requests_per_second = 3.0;
    bool record_fixtures = false;
    http::RetryPolicy retry;
};

struct LlmSettings {
    std::string endpoint;
    std::string model = "gpt-4";
};

struct KbSettings {
    std::vector<std::string> keywords = kb::default_keywords();
    std::size_t chunk_size = kb::kDefaultChunkSize;
    std::size_t overlap = kb::kDefaultOverlap;
};

struct ExperimentSettings {
    std::vector<eval::ExperimentKind> configs = eval::all_experiments();
    int n_folds = 5;
    std::array<std::size_t, 3> hidden_dims = mlp::kDefaultHiddenDims;
    std::size_t workers = 1;
};

/// One structured (JSON) config file with a section per module. Relative paths
/// are resolved against the config file's directory.
struct RunConfig {
    struct Paths {
        std::optional<std::filesystem::path> cases;
        std::optional<std::filesystem::path> corpus;
        std::optional<std::filesystem::path> fixtures;
        std::optional<std::filesystem::path> output_dir;
        std::optional<std::filesystem::path> kb_index;
        std::optional<std::filesystem::path> histology_model;
        std::optional<std::filesystem::path> report_embeddings;
    } paths;
    agent::AgentConfig agent;
    std::size_t report_workers = 4;
    LlmSettings llm;
    ToolSettings tools;
    KbSettings kb;
    mlp::TrainConfig train;
    EmbedderConfig embedder;
    ExperimentSettings experiment;
    std::uint64_t seed = 0;
    bool offline = false;

    std::filesystem::path source;  // config file, empty when built in code
    std::string source_sha256;

    /// Throws ValidationError naming the key when a required path is unset or does not exist.
    const std::filesystem::path& require_existing(const std::optional<std::filesystem::path>& path,
                                                  const char* key) const;
    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace moa
