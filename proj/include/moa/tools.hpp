#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moa/classifier.hpp"
#include "moa/core.hpp"
#include "moa/http.hpp"

namespace moa::tools {

struct ToolDescriptor {
    std::string name;
    std::string description;
    nlohmann::json input_schema;  // JSON-schema object
    std::vector<std::string> requires_fields;  // PatientCase fields that must be present
};

enum class ToolStatus { ok, error, skipped };
std::string_view to_string(ToolStatus status);
ToolStatus parse_tool_status(std::string_view text);

struct ToolResult {
    std::string tool_name;
    ToolStatus status = ToolStatus::ok;
    std::string payload;
    std::vector<std::string> citations;
    std::uint64_t latency_ms = 0;
    std::string reason;  // set for error and skipped
    int attempts = 0;
    nlohmann::json data = nlohmann::json::object();  // structured extras

    /// Latency is excluded unless requested so that replayed runs serialize identically.
    nlohmann::json to_json(bool include_latency = false) const;
    static ToolResult from_json(const nlohmann::json& j);
    /// Result of an operation that must not fail silently (ok needs a payload, skipped a reason).
    void check_invariants() const;
};

ToolResult error_result(std::string tool, std::string reason, int attempts = 0);

/// Recorded HTTP exchanges for one tool invocation, keyed by tool name plus a
/// hash of the canonical input.
struct Fixture {
    struct Exchange {
        std::string method;
        std::string url;
        int status = 0;
        std::string body;
    };
    std::string tool;
    nlohmann::json input;
    std::vector<Exchange> exchanges;
};

class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path root);

    static std::string cache_key(const std::string& tool, const nlohmann::json& canonical_input);
    std::filesystem::path path_for(const std::string& tool, const nlohmann::json& canonical_input) const;

    std::optional<Fixture> lookup(const std::string& tool, const nlohmann::json& canonical_input) const;
    void save(const Fixture& fixture) const;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// Shared configuration for every networked tool.
struct ToolContext {
    bool offline = true;
    std::shared_ptr<http::Transport> transport;  // live transport; ignored offline
    std::shared_ptr<FixtureStore> fixtures;
    bool record_fixtures = false;
    http::RetryPolicy retry;
    std::map<std::string, std::shared_ptr<http::RateLimiter>> limiters;  // per service

    /// Offline context: replay only, every live call fails.
    static ToolContext offline_replay(std::shared_ptr<FixtureStore> fixtures);
    http::RateLimiter* limiter(const std::string& service) const;
};

/// Performs the HTTP exchanges of one tool call: live (optionally recording) or
/// replayed from a fixture in order.
class ExchangeSession {
public:
    ExchangeSession(const ToolContext& context, std::string tool, nlohmann::json canonical_input,
                    std::string service);

    /// Throws Error("fixture miss: <key>") offline when no fixture exists.
    http::Response fetch(const http::Request& request);
    /// Saves the recorded exchanges when recording is enabled.
    void commit();
    int attempts() const { return attempts_; }
    const std::string& cache_key() const { return key_; }

private:
    const ToolContext& context_;
    std::string tool_;
    nlohmann::json input_;
    std::string service_;
    std::string key_;
    std::optional<Fixture> replay_;
    std::size_t cursor_ = 0;
    Fixture recorded_;
    int attempts_ = 0;
};

class Tool {
public:
    virtual ~Tool() = default;
    virtual const ToolDescriptor& descriptor() const = 0;
    /// Never mutates a PatientCase; arguments are plain JSON.
    virtual ToolResult invoke(const nlohmann::json& arguments) = 0;
};

class ToolRegistry {
public:
    void add(std::shared_ptr<Tool> tool);
    Tool* find(const std::string& name) const;
    bool contains(const std::string& name) const { return find(name) != nullptr; }
    std::vector<ToolDescriptor> descriptors() const;

private:
    std::vector<std::shared_ptr<Tool>> tools_;
};

inline constexpr const char* kPubMed = "pubmed_search";
inline constexpr const char* kOncoKb = "oncokb_annotate";
inline constexpr const char* kWebSearch = "web_search";
inline constexpr const char* kHistology = "histology_predict";

class PubMedTool final : public Tool {
public:
    explicit PubMedTool(std::shared_ptr<const ToolContext> context,
                        std::string base_url = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils");
    const ToolDescriptor& descriptor() const override { return descriptor_; }
    ToolResult invoke(const nlohmann::json& arguments) override;
    ToolResult search(const std::string& term, int max_results);

private:
    std::shared_ptr<const ToolContext> context_;
    std::string base_url_;
    ToolDescriptor descriptor_;
};

class OncoKbTool final : public Tool {
public:
    OncoKbTool(std::shared_ptr<const ToolContext> context, std::string token,
               std::string base_url = "https://www.oncokb.org/api/v1");
    const ToolDescriptor& descriptor() const override { return descriptor_; }
    ToolResult invoke(const nlohmann::json& arguments) override;
    ToolResult annotate(const std::string& gene, const std::string& alteration);

private:
    std::shared_ptr<const ToolContext> context_;
    std::string token_;
    std::string base_url_;
    ToolDescriptor descriptor_;
};

/// Maps an OncoKB result (status ok) to a GeneAnnotation.
GeneAnnotation to_gene_annotation(const ToolResult& result);

struct SearchHit {
    std::string title;
    std::string snippet;
    std::string url;
};

/// Live web-search backend. Responses use the Google Custom Search JSON shape
/// ({"items":[{"title","snippet","link"}]}), which is also the fixture format.
class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    virtual std::string name() const = 0;
    /// nullopt: the provider performs no HTTP and returns `stub_hits`.
    virtual std::optional<http::Request> build_request(const std::string& query, int max_results) const = 0;
};

class StubSearchProvider final : public SearchProvider {
public:
    std::string name() const override { return "stub"; }
    std::optional<http::Request> build_request(const std::string&, int) const override { return std::nullopt; }
};

class CustomSearchProvider final : public SearchProvider {
public:
    CustomSearchProvider(std::string api_key, std::string engine_id,
                         std::string endpoint = "https://www.googleapis.com/customsearch/v1");
    std::string name() const override { return "custom-search"; }
    std::optional<http::Request> build_request(const std::string& query, int max_results) const override;

private:
    std::string api_key_;
    std::string engine_id_;
    std::string endpoint_;
};

std::vector<SearchHit> parse_search_response(const std::string& body);

class WebSearchTool final : public Tool {
public:
    WebSearchTool(std::shared_ptr<const ToolContext> context, std::shared_ptr<SearchProvider> provider);
    const ToolDescriptor& descriptor() const override { return descriptor_; }
    ToolResult invoke(const nlohmann::json& arguments) override;
    ToolResult search(const std::string& query, int max_results);

private:
    std::shared_ptr<const ToolContext> context_;
    std::shared_ptr<SearchProvider> provider_;
    ToolDescriptor descriptor_;
};

inline constexpr std::size_t kSlideFeatureDim = 768;

/// Reads a per-slide feature file: either one embedding record (line-delimited
/// JSON) or whitespace/comma separated reals.
std::vector<double> load_slide_features(const std::filesystem::path& path);

/// True for whole-slide image extensions (.svs, .tif, .ndpi, ...), which need
/// upstream feature extraction.
bool is_slide_image(const std::filesystem::path& path);

class HistologyTool final : public Tool {
public:
    explicit HistologyTool(std::shared_ptr<const mlp::MlpModel> model);
    const ToolDescriptor& descriptor() const override { return descriptor_; }
    ToolResult invoke(const nlohmann::json& arguments) override;
    ToolResult predict(const std::filesystem::path& feature_path) const;

private:
    std::shared_ptr<const mlp::MlpModel> model_;
    ToolDescriptor descriptor_;
};

}  // namespace moa::tools
