#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "moa/core.hpp"
#include "moa/knowledge_base.hpp"
#include "moa/text_embedder.hpp"
#include "moa/tools.hpp"

namespace moa::agent {

inline constexpr const char* kDefaultQuery =
    "Predict the IDH1 mutation status of this low-grade glioma patient and justify using available evidence.";

/// System message sent to live chat backends.
inline constexpr const char* kSystemPrompt =
    "You are an oncology assistant. Use the provided tools to gather evidence about the patient "
    "(literature, curated variant annotations, web sources, histology predictions) and the "
    "knowledge-base excerpts supplied with the case. Call tools only when the case provides their "
    "inputs. When finished, write a concise report with sections for patient summary, molecular "
    "findings, evidence and conclusion, and end with a line of the form "
    "'IDH1 status: <mutant|wildtype|undetermined>'.";

enum class BackendKind { live_llm, mock };
BackendKind parse_backend_kind(std::string_view text);

struct AgentConfig {
    std::set<std::string> enabled_tools = {tools::kPubMed, tools::kOncoKb, tools::kWebSearch, tools::kHistology};
    bool histology_enabled = true;
    std::string fixed_query = kDefaultQuery;
    int max_tool_rounds = 8;
    BackendKind backend = BackendKind::mock;
    std::size_t rag_top_k = kb::kDefaultTopK;
    int max_results = 3;

    void validate() const;
};

struct ToolCallRequest {
    std::string tool_name;
    nlohmann::json arguments = nlohmann::json::object();
};

struct TranscriptRound {
    ToolCallRequest request;
    tools::ToolResult result;
};

struct RetrievedChunk {
    std::string chunk_id;
    std::string title;
    double score = 0.0;
};

struct AgentTranscript {
    std::string patient_id;
    PatientCase patient;
    std::string query;
    std::vector<std::string> offered_tools;
    std::vector<TranscriptRound> rounds;
    std::vector<RetrievedChunk> retrieved_chunks;
    std::string report_text;
    std::string backend_id;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
    static AgentTranscript from_json(const nlohmann::json& j);
    std::size_t invocations_of(const std::string& tool) const;
};

/// Everything a backend sees when choosing its next step.
struct AgentContext {
    const PatientCase& patient;
    const std::string& query;
    const std::vector<tools::ToolDescriptor>& offered_tools;
    const std::vector<TranscriptRound>& rounds;
    const std::vector<RetrievedChunk>& retrieved;
};

struct BackendAction {
    bool finish = false;
    ToolCallRequest call;
    std::string report;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Must be safe to call concurrently for different patients.
    virtual BackendAction next(const AgentContext& context) const = 0;
    virtual std::string id() const = 0;
};

/// Deterministic stand-in for the LLM: pubmed, then oncokb per annotation, then
/// web_search, then histology (each only if offered), then a templated report.
BackendAction mock_backend(const PatientCase& patient, const std::vector<tools::ToolDescriptor>& offered_tools,
                           const std::vector<TranscriptRound>& rounds_so_far,
                           const std::vector<RetrievedChunk>& retrieved, const std::string& query);

/// The report the mock backend writes for a completed run.
std::string synthesize_mock_report(const PatientCase& patient, const std::vector<TranscriptRound>& rounds,
                                   const std::vector<RetrievedChunk>& retrieved, const std::string& query);

/// Rebuilds the mock report from a stored transcript.
std::string replay_report(const AgentTranscript& transcript);

class MockBackend final : public ChatBackend {
public:
    BackendAction next(const AgentContext& context) const override;
    std::string id() const override { return "mock-v1"; }
};

struct LiveBackendConfig {
    std::string endpoint;  // full chat-completions URL
    std::string model = "gpt-4";
    std::string api_key;
    http::RetryPolicy retry;
};

/// Chat-completions-with-tool-calls HTTP contract: the request carries the
/// conversation plus tool schemas; the response holds a tool call or final text.
class ChatCompletionsBackend final : public ChatBackend {
public:
    ChatCompletionsBackend(LiveBackendConfig config, std::shared_ptr<http::Transport> transport,
                           std::shared_ptr<http::RateLimiter> limiter = nullptr);
    BackendAction next(const AgentContext& context) const override;
    std::string id() const override { return "chat:" + config_.model; }

    nlohmann::json build_request(const AgentContext& context) const;
    static BackendAction parse_response(const std::string& body);

private:
    LiveBackendConfig config_;
    std::shared_ptr<http::Transport> transport_;
    std::shared_ptr<http::RateLimiter> limiter_;
};

/// Case text shown to the backend: clinical text, molecular summary, slide availability.
std::string patient_context(const PatientCase& patient);

/// Tools the backend may call for this case: enabled, registered, histology only
/// when enabled, and every `requires` field present in the case.
std::vector<tools::ToolDescriptor> offered_tools(const PatientCase& patient, const AgentConfig& config,
                                                 const tools::ToolRegistry& registry);

AgentTranscript run_agent(const PatientCase& patient, const AgentConfig& config,
                          const tools::ToolRegistry& registry, const kb::Index& index,
                          TextEmbedder& embedder, const ChatBackend& backend);

/// Strips heading markers, emphasis markers and list bullets, normalizes line
/// endings, collapses whitespace and trims. Idempotent.
std::string clean_report(const std::string& text);

std::string safe_file_stem(const std::string& patient_id);

struct ReportRunOptions {
    std::filesystem::path out_dir;
    std::size_t workers = 4;
};

/// Runs the agent for every case with a bounded worker pool and writes
/// <out>/transcripts/<id>.json and <out>/reports/<id>.txt. Results are in case order.
std::vector<AgentTranscript> generate_reports(const CohortManifest& manifest, const AgentConfig& config,
                                              const tools::ToolRegistry& registry, const kb::Index& index,
                                              TextEmbedder& embedder, const ChatBackend& backend,
                                              const ReportRunOptions& options);

}  // namespace moa::agent
