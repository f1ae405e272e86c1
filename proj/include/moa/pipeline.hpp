#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "moa/agent.hpp"
#include "moa/config.hpp"
#include "moa/evaluation.hpp"

namespace moa::pipeline {

inline constexpr const char* kVersion = "0.1.0";

/// Shared runtime wiring built from a RunConfig.
struct Services {
    std::shared_ptr<http::Transport> transport;
    std::shared_ptr<tools::ToolContext> tool_context;
    tools::ToolRegistry registry;
    std::unique_ptr<TextEmbedder> embedder;
    std::unique_ptr<agent::ChatBackend> backend;
};

/// `offline` forces replay-only tools and an OfflineGuard transport.
Services make_services(const RunConfig& config, bool offline);

/// Loads paths.kb_index when it exists, otherwise builds from paths.corpus
/// (and saves to paths.kb_index when set).
kb::Index load_or_build_index(const RunConfig& config, TextEmbedder& embedder);

/// Runs the agent over the eligible cases and embeds the cleaned reports.
std::vector<Embedding> report_embeddings(const RunConfig& config, const CohortManifest& manifest,
                                         Services& services, const std::filesystem::path& out_dir);

/// Clinical-text embeddings of every eligible case.
std::vector<Embedding> clinical_text_embeddings(const CohortManifest& manifest, TextEmbedder& embedder);

/// Slide feature vectors of eligible cases that reference a feature file.
std::vector<Embedding> slide_embeddings(const CohortManifest& manifest);

struct ExperimentOutputs {
    std::vector<eval::ExperimentRun> runs;
    std::string table;
};

/// Per-fold leakage audits are written next to the results: <results>.audit.jsonl.
std::filesystem::path audit_path(const std::filesystem::path& results_path);

/// The end-to-end comparison: features for every requested configuration, shared
/// stratified folds, per-fold training and evaluation. Writes result records
/// (one per line) to `results_path`.
ExperimentOutputs run_experiments(const RunConfig& config, bool offline,
                                  const std::filesystem::path& results_path);

/// Provenance written next to every output: command, arguments, config hash,
/// seed, library and build versions. Contains no timestamps.
nlohmann::json run_manifest(const std::string& command, const std::vector<std::string>& args,
                            const RunConfig* config, bool offline);
void write_run_manifest(const std::filesystem::path& output, const nlohmann::json& manifest);

}  // namespace moa::pipeline
