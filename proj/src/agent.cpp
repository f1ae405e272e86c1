#include "moa/agent.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "moa/errors.hpp"
#include "moa/io.hpp"
#include "moa/log.hpp"

namespace moa::agent {

using nlohmann::json;

BackendKind parse_backend_kind(std::string_view text) {
    if (text == "mock") return BackendKind::mock;
    if (text == "live_llm" || text == "live") return BackendKind::live_llm;
    throw ValidationError("unknown agent backend '" + std::string(text) + "'");
}

void AgentConfig::validate() const {
    if (max_tool_rounds < 1) throw ValidationError("max_tool_rounds must be >= 1");
    if (fixed_query.empty()) throw ValidationError("fixed_query must not be empty");
    if (rag_top_k < 1) throw ValidationError("rag_top_k must be >= 1");
    if (max_results < 0) throw ValidationError("max_results must be >= 0");
}

// ---------------------------------------------------------------- transcript

json AgentTranscript::to_json() const {
    json rounds_json = json::array();
    for (const auto& r : rounds) {
        rounds_json.push_back({{"request", {{"tool", r.request.tool_name}, {"arguments", r.request.arguments}}},
                               {"result", r.result.to_json()}});
    }
    json chunks = json::array();
    for (const auto& c : retrieved_chunks) {
        chunks.push_back({{"chunk_id", c.chunk_id}, {"title", c.title}, {"score", c.score}});
    }
    return {{"patient_id", patient_id},
            {"case", moa::to_json(patient)},
            {"query", query},
            {"backend", backend_id},
            {"offered_tools", offered_tools},
            {"rounds", std::move(rounds_json)},
            {"retrieved_chunks", std::move(chunks)},
            {"flags", flags},
            {"report", report_text}};
}

AgentTranscript AgentTranscript::from_json(const json& j) {
    AgentTranscript t;
    try {
        t.patient_id = j.at("patient_id").get<std::string>();
        t.patient = case_from_json(j.at("case"));
        t.query = j.at("query").get<std::string>();
        t.backend_id = j.at("backend").get<std::string>();
        t.offered_tools = j.at("offered_tools").get<std::vector<std::string>>();
        for (const auto& r : j.at("rounds")) {
            t.rounds.push_back({{r.at("request").at("tool").get<std::string>(), r.at("request").at("arguments")},
                                tools::ToolResult::from_json(r.at("result"))});
        }
        for (const auto& c : j.at("retrieved_chunks")) {
            t.retrieved_chunks.push_back(
                {c.at("chunk_id").get<std::string>(), c.at("title").get<std::string>(), c.at("score").get<double>()});
        }
        t.flags = j.value("flags", std::vector<std::string>{});
        t.report_text = j.at("report").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed transcript: ") + e.what());
    }
    return t;
}

std::size_t AgentTranscript::invocations_of(const std::string& tool) const {
    return static_cast<std::size_t>(std::count_if(rounds.begin(), rounds.end(), [&](const TranscriptRound& r) {
        return r.request.tool_name == tool;
    }));
}

// ---------------------------------------------------------------- mock backend

namespace {

bool offered(const std::vector<tools::ToolDescriptor>& tools, const char* name) {
    return std::any_of(tools.begin(), tools.end(), [&](const tools::ToolDescriptor& d) { return d.name == name; });
}

std::vector<ToolCallRequest> mock_plan(const PatientCase& patient,
                                       const std::vector<tools::ToolDescriptor>& offered_tools) {
    const std::string subject = patient.tumor_class.value_or("low-grade glioma");
    std::vector<ToolCallRequest> plan;
    if (offered(offered_tools, tools::kPubMed)) {
        plan.push_back({tools::kPubMed, {{"term", "IDH1 " + subject}, {"max_results", 3}}});
    }
    if (offered(offered_tools, tools::kOncoKb) && patient.molecular_summary) {
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto& a : *patient.molecular_summary) {
            if (!seen.emplace(a.gene_symbol, a.alteration).second) continue;
            plan.push_back({tools::kOncoKb, {{"gene", a.gene_symbol}, {"alteration", a.alteration}}});
        }
    }
    if (offered(offered_tools, tools::kWebSearch)) {
        plan.push_back({tools::kWebSearch, {{"query", "IDH1 mutation " + subject}, {"max_results", 3}}});
    }
    if (offered(offered_tools, tools::kHistology) && patient.slide_feature_path) {
        plan.push_back({tools::kHistology, {{"feature_path", patient.slide_feature_path->generic_string()}}});
    }
    return plan;
}

std::string first_lines(const std::string& text, std::size_t max_chars) {
    std::string out;
    for (char c : text) {
        if (out.size() >= max_chars) {
            while (!out.empty() && (static_cast<unsigned char>(out.back()) & 0xC0) == 0x80) out.pop_back();
            if (!out.empty()) out.pop_back();
            return out + "...";
        }
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

}  // namespace

std::string synthesize_mock_report(const PatientCase& patient, const std::vector<TranscriptRound>& rounds,
                                   const std::vector<RetrievedChunk>& retrieved, const std::string& query) {
    std::ostringstream out;
    out << "# MOA Report\n\n";
    out << "Patient: " << patient.patient_id << "\n";
    out << "Query: " << query << "\n\n";

    out << "## Patient Summary\n";
    const std::string clinical = build_clinical_text(patient);
    out << (clinical.empty() ? "No demographic, diagnostic or treatment data provided." : clinical) << "\n\n";

    out << "## Molecular Findings\n";
    bool supportive_variant = false;
    if (patient.molecular_summary && !patient.molecular_summary->empty()) {
        for (const auto& a : *patient.molecular_summary) {
            out << "- " << a.gene_symbol << (a.alteration.empty() ? "" : " " + a.alteration) << ": "
                << to_string(a.oncogenicity) << "\n";
        }
        supportive_variant = build_molecular_summary(patient).has_value();
    } else {
        out << "No molecular summary provided.\n";
    }
    out << "\n## Evidence\n";
    if (rounds.empty()) out << "No tools were invoked.\n";
    std::optional<std::string> histology_call;
    for (const auto& r : rounds) {
        out << "- **" << r.request.tool_name << "** ";
        if (r.result.status == tools::ToolStatus::ok) {
            out << first_lines(r.result.payload, 400) << "\n";
            if (r.request.tool_name == tools::kHistology) {
                histology_call = r.result.data.value("prediction", "");
            }
        } else {
            out << "(" << tools::to_string(r.result.status) << ": " << r.result.reason << ")\n";
        }
    }
    out << "\n## Knowledge Base\n";
    if (retrieved.empty()) out << "No knowledge-base excerpts retrieved.\n";
    for (const auto& c : retrieved) out << "- " << c.title << " [" << c.chunk_id << "]\n";

    out << "\n## Conclusion\n";
    std::string status = "undetermined";
    if (histology_call && !histology_call->empty()) {
        status = *histology_call;
        out << "The histology classifier predicts " << status << " IDH1 status from slide features.\n";
    } else if (supportive_variant) {
        status = "mutant";
        out << "Oncogenic TP53/CIC alterations co-occur with IDH1-mutant astrocytoma and "
               "oligodendroglioma, supporting a mutant IDH1 status.\n";
    } else {
        out << "Available evidence does not determine IDH1 status.\n";
    }
    out << "IDH1 status: " << status << "\n";
    return out.str();
}

BackendAction mock_backend(const PatientCase& patient, const std::vector<tools::ToolDescriptor>& offered_tools,
                           const std::vector<TranscriptRound>& rounds_so_far,
                           const std::vector<RetrievedChunk>& retrieved, const std::string& query) {
    const auto plan = mock_plan(patient, offered_tools);
    if (rounds_so_far.size() < plan.size()) {
        return {false, plan[rounds_so_far.size()], {}};
    }
    return {true, {}, synthesize_mock_report(patient, rounds_so_far, retrieved, query)};
}

BackendAction MockBackend::next(const AgentContext& context) const {
    return mock_backend(context.patient, context.offered_tools, context.rounds, context.retrieved, context.query);
}

std::string replay_report(const AgentTranscript& transcript) {
    return synthesize_mock_report(transcript.patient, transcript.rounds, transcript.retrieved_chunks,
                                  transcript.query);
}

// ---------------------------------------------------------------- live backend

ChatCompletionsBackend::ChatCompletionsBackend(LiveBackendConfig config, std::shared_ptr<http::Transport> transport,
                                               std::shared_ptr<http::RateLimiter> limiter)
    : config_(std::move(config)), transport_(std::move(transport)), limiter_(std::move(limiter)) {
    if (config_.endpoint.empty()) throw ValidationError("live backend needs an endpoint");
    if (!transport_) throw PreconditionError("live backend needs a transport");
}

json ChatCompletionsBackend::build_request(const AgentContext& context) const {
    std::ostringstream user;
    user << "Patient case:\n" << patient_context(context.patient) << "\n\nQuery: " << context.query;
    if (!context.retrieved.empty()) {
        user << "\n\nKnowledge-base excerpts:";
        for (std::size_t i = 0; i < context.retrieved.size(); ++i) {
            user << "\n[" << i + 1 << "] " << context.retrieved[i].title << " (" << context.retrieved[i].chunk_id << ")";
        }
    }
    json messages = json::array({{{"role", "system"}, {"content", kSystemPrompt}},
                                 {{"role", "user"}, {"content", user.str()}}});
    for (std::size_t i = 0; i < context.rounds.size(); ++i) {
        const auto& r = context.rounds[i];
        const std::string call_id = "call_" + std::to_string(i + 1);
        messages.push_back({{"role", "assistant"},
                            {"content", nullptr},
                            {"tool_calls",
                             json::array({{{"id", call_id},
                                           {"type", "function"},
                                           {"function",
                                            {{"name", r.request.tool_name}, {"arguments", r.request.arguments.dump()}}}}})}});
        const std::string content = r.result.status == tools::ToolStatus::ok
                                        ? r.result.payload
                                        : std::string(tools::to_string(r.result.status)) + ": " + r.result.reason;
        messages.push_back({{"role", "tool"}, {"tool_call_id", call_id}, {"content", content}});
    }
    json request = {{"model", config_.model}, {"messages", std::move(messages)}, {"temperature", 0}};
    if (!context.offered_tools.empty()) {
        json tools_json = json::array();
        for (const auto& d : context.offered_tools) {
            tools_json.push_back({{"type", "function"},
                                  {"function", {{"name", d.name}, {"description", d.description}, {"parameters", d.input_schema}}}});
        }
        request["tools"] = std::move(tools_json);
    }
    return request;
}

BackendAction ChatCompletionsBackend::parse_response(const std::string& body) {
    try {
        const json doc = json::parse(body);
        const auto& message = doc.at("choices").at(0).at("message");
        if (message.contains("tool_calls") && message["tool_calls"].is_array() && !message["tool_calls"].empty()) {
            const auto& fn = message["tool_calls"][0].at("function");
            json arguments = json::object();
            const auto raw = fn.value("arguments", std::string("{}"));
            if (!raw.empty()) arguments = json::parse(raw);
            return {false, {fn.at("name").get<std::string>(), std::move(arguments)}, {}};
        }
        const auto content = message.value("content", std::string{});
        if (content.empty()) throw ParseError("chat response has neither tool calls nor content");
        return {true, {}, content};
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed chat response: ") + e.what());
    }
}

BackendAction ChatCompletionsBackend::next(const AgentContext& context) const {
    http::Request request;
    request.method = "POST";
    request.url = config_.endpoint;
    request.headers["Content-Type"] = "application/json";
    if (!config_.api_key.empty()) request.headers["Authorization"] = "Bearer " + config_.api_key;
    request.body = build_request(context).dump();
    const auto outcome = http::send_with_retry(*transport_, request, config_.retry, limiter_.get());
    if (outcome.response.status != 200) {
        throw Error("chat backend returned HTTP " + std::to_string(outcome.response.status));
    }
    return parse_response(outcome.response.body);
}

// ---------------------------------------------------------------- orchestration

std::string patient_context(const PatientCase& patient) {
    std::ostringstream out;
    out << "Patient ID: " << patient.patient_id << "\n";
    const auto clinical = build_clinical_text(patient);
    out << "Clinical data: " << (clinical.empty() ? "not available" : clinical) << "\n";
    if (patient.molecular_summary && !patient.molecular_summary->empty()) {
        out << "Molecular summary:";
        for (const auto& a : *patient.molecular_summary) {
            out << " " << a.gene_symbol << (a.alteration.empty() ? "" : " " + a.alteration) << " ("
                << to_string(a.oncogenicity) << ");";
        }
        out << "\n";
    } else {
        out << "Molecular summary: not available\n";
    }
    if (patient.slide_feature_path) out << "Histology slide features: " << patient.slide_feature_path->generic_string() << "\n";
    return out.str();
}

std::vector<tools::ToolDescriptor> offered_tools(const PatientCase& patient, const AgentConfig& config,
                                                 const tools::ToolRegistry& registry) {
    std::vector<tools::ToolDescriptor> out;
    for (const auto& d : registry.descriptors()) {
        if (!config.enabled_tools.contains(d.name)) continue;
        if (d.name == tools::kHistology && !config.histology_enabled) continue;
        const bool inputs_present = std::all_of(d.requires_fields.begin(), d.requires_fields.end(),
                                                [&](const std::string& f) { return patient.has_field(f); });
        if (inputs_present) out.push_back(d);
    }
    return out;
}

AgentTranscript run_agent(const PatientCase& patient, const AgentConfig& config,
                          const tools::ToolRegistry& registry, const kb::Index& index, TextEmbedder& embedder,
                          const ChatBackend& backend) {
    config.validate();
    for (const auto& name : config.enabled_tools) {
        if (name == tools::kHistology && !config.histology_enabled) continue;
        if (!registry.contains(name)) throw PreconditionError("enabled tool '" + name + "' is not registered");
    }

    AgentTranscript t;
    t.patient_id = patient.patient_id;
    t.patient = patient;
    t.query = config.fixed_query;
    t.backend_id = backend.id();
    const auto tools_for_case = offered_tools(patient, config, registry);
    for (const auto& d : tools_for_case) t.offered_tools.push_back(d.name);

    if (!index.empty()) {
        std::string rag_query = config.fixed_query + " " + build_clinical_text(patient);
        if (auto molecular = build_molecular_summary(patient)) rag_query += " " + *molecular;
        for (const auto& hit : index.retrieve(rag_query, config.rag_top_k, embedder)) {
            t.retrieved_chunks.push_back({hit.chunk->chunk_id, hit.chunk->title, hit.score});
        }
    }

    const std::size_t round_cap = static_cast<std::size_t>(config.max_tool_rounds) * tools_for_case.size();
    const std::vector<tools::ToolDescriptor> no_tools;
    std::map<std::string, int> calls_per_tool;
    std::size_t rejected = 0;
    while (true) {
        const bool exhausted = t.rounds.size() >= round_cap ||
                               rejected >= static_cast<std::size_t>(config.max_tool_rounds);
        const AgentContext context{patient, t.query, exhausted ? no_tools : tools_for_case, t.rounds,
                                   t.retrieved_chunks};
        auto action = backend.next(context);
        if (action.finish) {
            t.report_text = std::move(action.report);
            break;
        }
        const auto& name = action.call.tool_name;
        const bool allowed = !exhausted && std::any_of(tools_for_case.begin(), tools_for_case.end(),
                                                       [&](const tools::ToolDescriptor& d) { return d.name == name; });
        if (!allowed) {
            log::warn("tool_call_rejected", {{"patient_id", patient.patient_id}, {"tool", name}});
            if (exhausted) throw Error("backend kept requesting tools after the round limit");
            ++rejected;
            continue;
        }
        TranscriptRound round{action.call, {}};
        if (++calls_per_tool[name] > config.max_tool_rounds) {
            round.result.tool_name = name;
            round.result.status = tools::ToolStatus::skipped;
            round.result.reason = "per-tool round limit reached";
        } else {
            try {
                round.result = registry.find(name)->invoke(action.call.arguments);
            } catch (const std::exception& e) {
                round.result = tools::error_result(name, e.what());
            }
        }
        log::info("tool_call", {{"patient_id", patient.patient_id},
                                {"tool", name},
                                {"status", tools::to_string(round.result.status)},
                                {"latency_ms", round.result.latency_ms},
                                {"attempts", round.result.attempts}});
        t.rounds.push_back(std::move(round));
    }

    const bool any_ok = std::any_of(t.rounds.begin(), t.rounds.end(), [](const TranscriptRound& r) {
        return r.result.status == tools::ToolStatus::ok;
    });
    if (!t.rounds.empty() && !any_ok) {
        t.flags.emplace_back("all_tools_failed");
        log::warn("all_tools_failed", {{"patient_id", patient.patient_id}});
    }
    if (t.report_text.empty()) throw Error("backend produced an empty report for " + patient.patient_id);
    return t;
}

// ---------------------------------------------------------------- cleaning

namespace {

std::string strip_line_markup(std::string line) {
    std::size_t i = line.find_first_not_of(" \t");
    if (i == std::string::npos) return {};
    line.erase(0, i);
    // Heading markers.
    if (line[0] == '#') {
        std::size_t h = line.find_first_not_of('#');
        if (h == std::string::npos) return {};
        if (line[h] == ' ' || line[h] == '\t') line.erase(0, h);
    }
    // Block quotes and list bullets.
    if (line.size() >= 2 && (line[0] == '-' || line[0] == '*' || line[0] == '+' || line[0] == '>') &&
        (line[1] == ' ' || line[1] == '\t')) {
        line.erase(0, 2);
    } else {
        std::size_t d = 0;
        while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
        if (d > 0 && d + 1 < line.size() && (line[d] == '.' || line[d] == ')') &&
            (line[d + 1] == ' ' || line[d + 1] == '\t')) {
            line.erase(0, d + 2);
        }
    }
    // Emphasis and code markers.
    std::string out;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (c == '*' || c == '`') continue;
        if ((c == '_' || c == '~') && k + 1 < line.size() && line[k + 1] == c) {
            ++k;
            continue;
        }
        out += c;
    }
    return out;
}

std::string clean_once(const std::string& text) {
    std::string normalized;
    normalized.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            normalized += '\n';
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            normalized += text[i];
        }
    }
    std::string joined;
    std::istringstream lines(normalized);
    std::string line;
    while (std::getline(lines, line)) {
        joined += strip_line_markup(line);
        joined += ' ';
    }
    std::string out;
    bool pending_space = false;
    for (unsigned char c : joined) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += static_cast<char>(c);
    }
    return out;
}

}  // namespace

std::string clean_report(const std::string& text) {
    std::string current = clean_once(text);
    // Stripping can expose new leading markers ("- - x"); iterate to a fixed point.
    for (std::size_t guard = 0; guard <= text.size(); ++guard) {
        std::string next = clean_once(current);
        if (next == current) break;
        current = std::move(next);
    }
    return current;
}

// ---------------------------------------------------------------- cohort runs

std::string safe_file_stem(const std::string& patient_id) {
    std::string out;
    for (unsigned char c : patient_id) {
        out += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
    }
    if (out.empty() || out[0] == '.') out.insert(out.begin(), '_');
    return out;
}

std::vector<AgentTranscript> generate_reports(const CohortManifest& manifest, const AgentConfig& config,
                                              const tools::ToolRegistry& registry, const kb::Index& index,
                                              TextEmbedder& embedder, const ChatBackend& backend,
                                              const ReportRunOptions& options) {
    config.validate();
    const std::size_t n = manifest.cases.size();
    std::vector<std::optional<AgentTranscript>> results(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            const auto& patient = manifest.cases[i];
            try {
                auto t = run_agent(patient, config, registry, index, embedder, backend);
                if (!options.out_dir.empty()) {
                    const auto stem = safe_file_stem(patient.patient_id);
                    io::write_file(options.out_dir / "transcripts" / (stem + ".json"), t.to_json().dump(2) + "\n");
                    io::write_file(options.out_dir / "reports" / (stem + ".txt"), t.report_text);
                }
                results[i] = std::move(t);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(1, n));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    std::vector<AgentTranscript> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            throw Error("report generation failed for " + manifest.cases[i].patient_id + ": " + errors[i]);
        }
        out.push_back(std::move(*results[i]));
    }
    return out;
}

}  // namespace moa::agent
