#include "moa/tools.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "moa/errors.hpp"
#include "moa/hashing.hpp"
#include "moa/io.hpp"
#include "moa/log.hpp"

namespace moa::tools {

using nlohmann::json;

std::string_view to_string(ToolStatus status) {
    switch (status) {
        case ToolStatus::ok: return "ok";
        case ToolStatus::error: return "error";
        case ToolStatus::skipped: return "skipped";
    }
    return "error";
}

ToolStatus parse_tool_status(std::string_view text) {
    if (text == "ok") return ToolStatus::ok;
    if (text == "error") return ToolStatus::error;
    if (text == "skipped") return ToolStatus::skipped;
    throw ParseError("unknown tool status '" + std::string(text) + "'");
}

json ToolResult::to_json(bool include_latency) const {
    json j = {{"tool", tool_name},       {"status", to_string(status)}, {"payload", payload},
              {"citations", citations}, {"reason", reason},            {"attempts", attempts},
              {"data", data}};
    if (include_latency) j["latency_ms"] = latency_ms;
    return j;
}

ToolResult ToolResult::from_json(const json& j) {
    ToolResult r;
    r.tool_name = j.at("tool").get<std::string>();
    r.status = parse_tool_status(j.at("status").get<std::string>());
    r.payload = j.value("payload", "");
    r.citations = j.value("citations", std::vector<std::string>{});
    r.latency_ms = j.value("latency_ms", std::uint64_t{0});
    r.reason = j.value("reason", "");
    r.attempts = j.value("attempts", 0);
    r.data = j.value("data", json::object());
    return r;
}

void ToolResult::check_invariants() const {
    if (status == ToolStatus::ok && payload.empty()) {
        throw ValidationError(tool_name + ": ok result with empty payload");
    }
    if (status != ToolStatus::ok && reason.empty()) {
        throw ValidationError(tool_name + ": " + std::string(to_string(status)) + " result without a reason");
    }
}

ToolResult error_result(std::string tool, std::string reason, int attempts) {
    ToolResult r;
    r.tool_name = std::move(tool);
    r.status = ToolStatus::error;
    r.reason = std::move(reason);
    r.attempts = attempts;
    return r;
}

// ---------------------------------------------------------------- fixtures

FixtureStore::FixtureStore(std::filesystem::path root) : root_(std::move(root)) {}

std::string FixtureStore::cache_key(const std::string& tool, const json& canonical_input) {
    return tool + "/" + sha256_hex(canonical_input.dump()).substr(0, 24);
}

std::filesystem::path FixtureStore::path_for(const std::string& tool, const json& canonical_input) const {
    return root_ / (cache_key(tool, canonical_input) + ".json");
}

std::optional<Fixture> FixtureStore::lookup(const std::string& tool, const json& canonical_input) const {
    const auto path = path_for(tool, canonical_input);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        const json doc = json::parse(io::read_file(path));
        Fixture f;
        f.tool = doc.at("tool").get<std::string>();
        f.input = doc.at("input");
        for (const auto& e : doc.at("exchanges")) {
            f.exchanges.push_back({e.at("method").get<std::string>(), e.at("url").get<std::string>(),
                                   e.at("status").get<int>(), e.at("body").get<std::string>()});
        }
        return f;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void FixtureStore::save(const Fixture& fixture) const {
    json exchanges = json::array();
    for (const auto& e : fixture.exchanges) {
        exchanges.push_back({{"method", e.method}, {"url", e.url}, {"status", e.status}, {"body", e.body}});
    }
    const json doc = {{"tool", fixture.tool}, {"input", fixture.input}, {"exchanges", std::move(exchanges)}};
    io::write_file(path_for(fixture.tool, fixture.input), doc.dump(2) + "\n");
}

ToolContext ToolContext::offline_replay(std::shared_ptr<FixtureStore> fixtures) {
    ToolContext ctx;
    ctx.offline = true;
    ctx.transport = std::make_shared<http::OfflineGuard>();
    ctx.fixtures = std::move(fixtures);
    return ctx;
}

http::RateLimiter* ToolContext::limiter(const std::string& service) const {
    auto it = limiters.find(service);
    return it == limiters.end() ? nullptr : it->second.get();
}

namespace {

/// Drops credentials from recorded URLs so fixtures can be committed.
std::string redact_url(const std::string& url) {
    std::string out;
    std::size_t q = url.find('?');
    if (q == std::string::npos) return url;
    out = url.substr(0, q + 1);
    std::stringstream params(url.substr(q + 1));
    std::string param;
    bool first = true;
    while (std::getline(params, param, '&')) {
        const auto name = param.substr(0, param.find('='));
        if (name == "key" || name == "api_key" || name == "token") continue;
        out += (first ? "" : "&") + param;
        first = false;
    }
    return out;
}

std::string path_of(const std::string& url) {
    const auto scheme = url.find("://");
    const auto start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (start == std::string::npos) return "/";
    return url.substr(start, url.find('?', start) - start);
}

}  // namespace

ExchangeSession::ExchangeSession(const ToolContext& context, std::string tool, json canonical_input,
                                 std::string service)
    : context_(context),
      tool_(std::move(tool)),
      input_(std::move(canonical_input)),
      service_(std::move(service)),
      key_(FixtureStore::cache_key(tool_, input_)) {
    recorded_.tool = tool_;
    recorded_.input = input_;
    if (context_.offline) {
        if (context_.fixtures) replay_ = context_.fixtures->lookup(tool_, input_);
        if (!replay_) throw Error("fixture miss: " + key_);
    }
}

http::Response ExchangeSession::fetch(const http::Request& request) {
    if (replay_) {
        if (cursor_ >= replay_->exchanges.size()) {
            throw Error("fixture " + key_ + " has no recorded exchange #" + std::to_string(cursor_ + 1));
        }
        const auto& e = replay_->exchanges[cursor_++];
        if (e.method != request.method || path_of(e.url) != path_of(request.url)) {
            throw Error("fixture " + key_ + " recorded " + e.method + " " + path_of(e.url) +
                        " but tool requested " + request.method + " " + path_of(request.url));
        }
        attempts_ = std::max(attempts_, 1);
        return {e.status, e.body};
    }
    if (!context_.transport) throw TransportError("no live transport configured");
    try {
        auto outcome = http::send_with_retry(*context_.transport, request, context_.retry,
                                             context_.limiter(service_));
        attempts_ = std::max(attempts_, outcome.attempts);
        recorded_.exchanges.push_back({request.method, redact_url(request.url), outcome.response.status,
                                       outcome.response.body});
        return outcome.response;
    } catch (const TransportError&) {
        attempts_ = std::max(attempts_, context_.retry.max_attempts);
        throw;
    }
}

void ExchangeSession::commit() {
    if (!replay_ && context_.record_fixtures && context_.fixtures && !recorded_.exchanges.empty()) {
        context_.fixtures->save(recorded_);
    }
}

// ---------------------------------------------------------------- registry

void ToolRegistry::add(std::shared_ptr<Tool> tool) {
    if (!tool) throw PreconditionError("registry: null tool");
    if (contains(tool->descriptor().name)) {
        throw ValidationError("registry: duplicate tool name '" + tool->descriptor().name + "'");
    }
    const auto& fields = patient_case_fields();
    for (const auto& f : tool->descriptor().requires_fields) {
        if (std::find(fields.begin(), fields.end(), f) == fields.end()) {
            throw ValidationError("tool '" + tool->descriptor().name + "' requires unknown field '" + f + "'");
        }
    }
    tools_.push_back(std::move(tool));
}

Tool* ToolRegistry::find(const std::string& name) const {
    for (const auto& t : tools_) {
        if (t->descriptor().name == name) return t.get();
    }
    return nullptr;
}

std::vector<ToolDescriptor> ToolRegistry::descriptors() const {
    std::vector<ToolDescriptor> out;
    for (const auto& t : tools_) out.push_back(t->descriptor());
    return out;
}

// ---------------------------------------------------------------- helpers

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ms(Clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count());
}

std::string collapse_spaces(const std::string& text) {
    std::string out;
    bool space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += static_cast<char>(c);
    }
    return out;
}

std::string xml_unescape(const std::string& text) {
    static const std::vector<std::pair<std::string, std::string>> entities = {
        {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&apos;", "'"}, {"&#39;", "'"}, {"&amp;", "&"}};
    std::string out = text;
    for (const auto& [from, to] : entities) {
        std::size_t pos = 0;
        while ((pos = out.find(from, pos)) != std::string::npos) {
            out.replace(pos, from.size(), to);
            pos += to.size();
        }
    }
    return out;
}

std::string strip_tags(const std::string& text) {
    std::string out;
    bool in_tag = false;
    for (char c : text) {
        if (c == '<') in_tag = true;
        else if (c == '>') in_tag = false;
        else if (!in_tag) out += c;
    }
    return out;
}

/// Inner text of every <tag ...>...</tag> element inside `xml`.
std::vector<std::string> xml_elements(const std::string& xml, const std::string& tag) {
    std::vector<std::string> out;
    const std::string open = "<" + tag;
    const std::string close = "</" + tag + ">";
    std::size_t pos = 0;
    while ((pos = xml.find(open, pos)) != std::string::npos) {
        const char next = pos + open.size() < xml.size() ? xml[pos + open.size()] : '\0';
        if (next != '>' && next != ' ' && next != '\t' && next != '\n') {
            pos += open.size();
            continue;
        }
        const auto body_start = xml.find('>', pos);
        if (body_start == std::string::npos) break;
        const auto end = xml.find(close, body_start);
        if (end == std::string::npos) break;
        out.push_back(xml.substr(body_start + 1, end - body_start - 1));
        pos = end + close.size();
    }
    return out;
}

std::string truncate_chars(const std::string& text, std::size_t limit) {
    if (text.size() <= limit) return text;
    std::size_t cut = limit;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return text.substr(0, cut) + "...";
}

int int_arg(const json& args, const char* key, int fallback) {
    auto it = args.find(key);
    if (it == args.end()) return fallback;
    if (!it->is_number_integer()) throw PreconditionError(std::string(key) + " must be an integer");
    return it->get<int>();
}

std::string string_arg(const json& args, const char* key) {
    auto it = args.find(key);
    if (it == args.end() || !it->is_string()) return {};
    return it->get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------- PubMed

PubMedTool::PubMedTool(std::shared_ptr<const ToolContext> context, std::string base_url)
    : context_(std::move(context)), base_url_(std::move(base_url)) {
    descriptor_ = {kPubMed,
                   "Search PubMed for biomedical literature; returns article ids, titles and abstract snippets.",
                   {{"type", "object"},
                    {"properties",
                     {{"term", {{"type", "string"}, {"description", "PubMed search term"}}},
                      {"max_results", {{"type", "integer"}, {"minimum", 0}}}}},
                    {"required", {"term"}}},
                   {}};
}

ToolResult PubMedTool::invoke(const json& arguments) {
    return search(string_arg(arguments, "term"), int_arg(arguments, "max_results", 3));
}

ToolResult PubMedTool::search(const std::string& raw_term, int max_results) {
    const std::string term = collapse_spaces(raw_term);
    if (term.empty()) throw PreconditionError("pubmed_search: term must not be empty");
    if (max_results < 0) throw PreconditionError("pubmed_search: max_results must be >= 0");
    const auto start = Clock::now();
    ToolResult result;
    result.tool_name = kPubMed;
    if (max_results == 0) {
        result.payload = "No PubMed articles requested.";
        return result;
    }
    const json input = {{"term", term}, {"max_results", max_results}};
    try {
        ExchangeSession session(*context_, kPubMed, input, "pubmed");
        http::Request esearch;
        esearch.url = base_url_ + "/esearch.fcgi?db=pubmed&retmode=json&retmax=" +
                      std::to_string(max_results) + "&term=" + http::url_encode(term);
        const auto search_response = session.fetch(esearch);
        result.attempts = session.attempts();
        if (search_response.status != 200) {
            return error_result(kPubMed, "esearch HTTP " + std::to_string(search_response.status),
                                session.attempts());
        }
        std::vector<std::string> ids;
        try {
            ids = json::parse(search_response.body).at("esearchresult").at("idlist").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            return error_result(kPubMed, std::string("malformed esearch response: ") + e.what(), session.attempts());
        }
        if (ids.size() > static_cast<std::size_t>(max_results)) ids.resize(static_cast<std::size_t>(max_results));
        if (ids.empty()) {
            result.payload = "No PubMed articles found for \"" + term + "\".";
        } else {
            std::string id_list;
            for (const auto& id : ids) id_list += (id_list.empty() ? "" : ",") + id;
            http::Request efetch;
            efetch.url = base_url_ + "/efetch.fcgi?db=pubmed&retmode=xml&rettype=abstract&id=" + id_list;
            const auto fetch_response = session.fetch(efetch);
            result.attempts = session.attempts();
            if (fetch_response.status != 200) {
                return error_result(kPubMed, "efetch HTTP " + std::to_string(fetch_response.status),
                                    session.attempts());
            }
            std::ostringstream payload;
            for (const auto& article : xml_elements(fetch_response.body, "PubmedArticle")) {
                const auto pmids = xml_elements(article, "PMID");
                if (pmids.empty()) continue;
                const auto pmid = collapse_spaces(strip_tags(pmids.front()));
                const auto titles = xml_elements(article, "ArticleTitle");
                std::string abstract;
                for (const auto& part : xml_elements(article, "AbstractText")) abstract += part + " ";
                const std::string title = titles.empty() ? "" : collapse_spaces(xml_unescape(strip_tags(titles.front())));
                const std::string snippet = truncate_chars(collapse_spaces(xml_unescape(strip_tags(abstract))), 300);
                if (!result.citations.empty()) payload << '\n';
                payload << "PMID " << pmid << ": " << title;
                if (!snippet.empty()) payload << " -- " << snippet;
                result.citations.push_back("PMID:" + pmid);
                if (result.citations.size() == static_cast<std::size_t>(max_results)) break;
            }
            result.payload = payload.str();
            if (result.payload.empty()) result.payload = "No PubMed articles found for \"" + term + "\".";
        }
        session.commit();
    } catch (const TransportError& e) {
        return error_result(kPubMed, e.what(), context_->retry.max_attempts);
    } catch (const Error& e) {
        return error_result(kPubMed, e.what());
    }
    result.latency_ms = elapsed_ms(start);
    return result;
}

// ---------------------------------------------------------------- OncoKB

OncoKbTool::OncoKbTool(std::shared_ptr<const ToolContext> context, std::string token, std::string base_url)
    : context_(std::move(context)), token_(std::move(token)), base_url_(std::move(base_url)) {
    descriptor_ = {kOncoKb,
                   "Annotate a gene alteration with OncoKB oncogenicity and clinical summaries.",
                   {{"type", "object"},
                    {"properties",
                     {{"gene", {{"type", "string"}, {"description", "HUGO gene symbol"}}},
                      {"alteration", {{"type", "string"}, {"description", "protein change, e.g. R273H"}}}}},
                    {"required", {"gene"}}},
                   {"molecular_summary"}};
}

ToolResult OncoKbTool::invoke(const json& arguments) {
    return annotate(string_arg(arguments, "gene"), string_arg(arguments, "alteration"));
}

namespace {

Oncogenicity map_oncokb(const std::string& value) {
    if (value == "Oncogenic") return Oncogenicity::oncogenic;
    if (value == "Likely Oncogenic" || value == "Predicted Oncogenic") return Oncogenicity::likely_oncogenic;
    return Oncogenicity::unknown;
}

std::string upper(std::string text) {
    for (char& c : text) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return text;
}

}  // namespace

ToolResult OncoKbTool::annotate(const std::string& raw_gene, const std::string& raw_alteration) {
    const std::string gene = upper(collapse_spaces(raw_gene));
    const std::string alteration = collapse_spaces(raw_alteration);
    if (gene.empty()) throw PreconditionError("oncokb_annotate: gene must not be empty");
    const auto start = Clock::now();
    if (!context_->offline && token_.empty()) {
        return error_result(kOncoKb, "OncoKB auth token not configured (MOA_ONCOKB_TOKEN)");
    }
    ToolResult result;
    result.tool_name = kOncoKb;
    const json input = {{"gene", gene}, {"alteration", alteration}};
    try {
        ExchangeSession session(*context_, kOncoKb, input, "oncokb");
        http::Request request;
        request.url = base_url_ + "/annotate/mutations/byProteinChange?hugoSymbol=" + http::url_encode(gene) +
                      "&alteration=" + http::url_encode(alteration);
        request.headers["Authorization"] = "Bearer " + token_;
        request.headers["Accept"] = "application/json";
        const auto response = session.fetch(request);
        result.attempts = session.attempts();
        if (response.status == 401 || response.status == 403) {
            return error_result(kOncoKb, "OncoKB auth failure (HTTP " + std::to_string(response.status) + ")",
                                session.attempts());
        }
        if (response.status != 200) {
            return error_result(kOncoKb, "OncoKB HTTP " + std::to_string(response.status), session.attempts());
        }
        json body;
        try {
            body = json::parse(response.body);
        } catch (const json::exception& e) {
            return error_result(kOncoKb, std::string("malformed OncoKB response: ") + e.what(), session.attempts());
        }
        const bool gene_exists = body.value("geneExist", false);
        const auto oncogenicity = gene_exists ? map_oncokb(body.value("oncogenic", "Unknown")) : Oncogenicity::unknown;
        const std::string label = gene + (alteration.empty() ? "" : " " + alteration);
        std::string payload = label + ": " + std::string(to_string(oncogenicity)) + ".";
        if (!gene_exists) payload += " Gene not curated in OncoKB.";
        for (const char* key : {"variantSummary", "geneSummary", "tumorTypeSummary"}) {
            auto it = body.find(key);
            if (it != body.end() && it->is_string() && !it->get<std::string>().empty()) {
                payload += " " + collapse_spaces(it->get<std::string>());
            }
        }
        result.payload = payload;
        result.citations.push_back("OncoKB:" + label);
        result.data = {{"gene", gene}, {"alteration", alteration}, {"oncogenicity", to_string(oncogenicity)}};
        session.commit();
    } catch (const TransportError& e) {
        return error_result(kOncoKb, e.what(), context_->retry.max_attempts);
    } catch (const Error& e) {
        return error_result(kOncoKb, e.what());
    }
    result.latency_ms = elapsed_ms(start);
    return result;
}

GeneAnnotation to_gene_annotation(const ToolResult& result) {
    if (result.tool_name != kOncoKb || result.status != ToolStatus::ok) {
        throw PreconditionError("to_gene_annotation: needs an ok OncoKB result");
    }
    return {result.data.at("gene").get<std::string>(), result.data.value("alteration", ""),
            parse_oncogenicity(result.data.at("oncogenicity").get<std::string>()), "OncoKB"};
}

// ---------------------------------------------------------------- web search

CustomSearchProvider::CustomSearchProvider(std::string api_key, std::string engine_id, std::string endpoint)
    : api_key_(std::move(api_key)), engine_id_(std::move(engine_id)), endpoint_(std::move(endpoint)) {}

std::optional<http::Request> CustomSearchProvider::build_request(const std::string& query, int max_results) const {
    http::Request request;
    request.url = endpoint_ + "?q=" + http::url_encode(query) + "&num=" + std::to_string(max_results);
    if (!engine_id_.empty()) request.url += "&cx=" + http::url_encode(engine_id_);
    if (!api_key_.empty()) request.url += "&key=" + http::url_encode(api_key_);
    return request;
}

std::vector<SearchHit> parse_search_response(const std::string& body) {
    const json doc = json::parse(body);
    std::vector<SearchHit> hits;
    if (!doc.contains("items")) return hits;
    for (const auto& item : doc.at("items")) {
        hits.push_back({collapse_spaces(item.value("title", "")), collapse_spaces(item.value("snippet", "")),
                        item.value("link", "")});
    }
    return hits;
}

WebSearchTool::WebSearchTool(std::shared_ptr<const ToolContext> context, std::shared_ptr<SearchProvider> provider)
    : context_(std::move(context)), provider_(provider ? std::move(provider) : std::make_shared<StubSearchProvider>()) {
    descriptor_ = {kWebSearch,
                   "General web search; returns titles, snippets and URLs.",
                   {{"type", "object"},
                    {"properties",
                     {{"query", {{"type", "string"}}}, {"max_results", {{"type", "integer"}, {"minimum", 0}}}}},
                    {"required", {"query"}}},
                   {}};
}

ToolResult WebSearchTool::invoke(const json& arguments) {
    return search(string_arg(arguments, "query"), int_arg(arguments, "max_results", 3));
}

ToolResult WebSearchTool::search(const std::string& raw_query, int max_results) {
    const std::string query = collapse_spaces(raw_query);
    if (query.empty()) throw PreconditionError("web_search: query must not be empty");
    if (max_results < 0) throw PreconditionError("web_search: max_results must be >= 0");
    const auto start = Clock::now();
    ToolResult result;
    result.tool_name = kWebSearch;
    if (max_results == 0) {
        result.payload = "No web results requested.";
        return result;
    }
    const json input = {{"query", query}, {"max_results", max_results}};
    std::vector<SearchHit> hits;
    try {
        auto request = provider_->build_request(query, max_results);
        if (!context_->offline && !request) {
            result.payload = "No web results: search provider '" + provider_->name() + "' is not configured.";
            result.latency_ms = elapsed_ms(start);
            return result;
        }
        ExchangeSession session(*context_, kWebSearch, input, "web_search");
        // Offline replay still works for a stub provider: fixtures use the custom-search shape.
        if (!request) request = CustomSearchProvider("", "").build_request(query, max_results);
        const auto response = session.fetch(*request);
        result.attempts = session.attempts();
        if (response.status != 200) {
            return error_result(kWebSearch, "search HTTP " + std::to_string(response.status), session.attempts());
        }
        try {
            hits = parse_search_response(response.body);
        } catch (const json::exception& e) {
            return error_result(kWebSearch, std::string("malformed search response: ") + e.what(), session.attempts());
        }
        session.commit();
    } catch (const TransportError& e) {
        return error_result(kWebSearch, e.what(), context_->retry.max_attempts);
    } catch (const Error& e) {
        return error_result(kWebSearch, e.what());
    }
    if (hits.size() > static_cast<std::size_t>(max_results)) hits.resize(static_cast<std::size_t>(max_results));
    std::ostringstream payload;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i) payload << '\n';
        payload << hits[i].title << " -- " << hits[i].snippet << " <" << hits[i].url << ">";
        result.citations.push_back(hits[i].url);
    }
    result.payload = hits.empty() ? "No web results for \"" + query + "\"." : payload.str();
    result.latency_ms = elapsed_ms(start);
    return result;
}

// ---------------------------------------------------------------- histology

bool is_slide_image(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    static const std::vector<std::string> image_ext = {".svs", ".tif", ".tiff", ".ndpi", ".mrxs", ".scn",
                                                       ".vms", ".vmu", ".bif", ".png", ".jpg", ".jpeg"};
    return std::find(image_ext.begin(), image_ext.end(), ext) != image_ext.end();
}

std::vector<double> load_slide_features(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw Error("feature file not found: " + path.string());
    const std::string text = io::read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        auto records = load_embeddings(path);
        if (records.size() != 1) {
            throw ParseError(path.string() + ": expected exactly one feature record, found " +
                             std::to_string(records.size()));
        }
        return std::move(records.front().vector);
    }
    std::vector<double> values;
    std::string token;
    std::istringstream in(text);
    while (in >> token) {
        std::stringstream parts(token);
        std::string part;
        while (std::getline(parts, part, ',')) {
            if (part.empty()) continue;
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(part, &used);
            } catch (const std::exception&) {
                throw ParseError(path.string() + ": not a number: '" + part + "'");
            }
            if (used != part.size() || !std::isfinite(v)) {
                throw ParseError(path.string() + ": not a finite number: '" + part + "'");
            }
            values.push_back(v);
        }
    }
    return values;
}

HistologyTool::HistologyTool(std::shared_ptr<const mlp::MlpModel> model) : model_(std::move(model)) {
    if (!model_) throw PreconditionError("histology tool needs a model");
    if (model_->input_dim() != kSlideFeatureDim) {
        throw DimensionError("histology model input dimension must be " + std::to_string(kSlideFeatureDim));
    }
    descriptor_ = {kHistology,
                   "Predict IDH1 mutation probability from precomputed slide-level histology features.",
                   {{"type", "object"},
                    {"properties", {{"feature_path", {{"type", "string"}}}}},
                    {"required", {"feature_path"}}},
                   {"slide_feature_path"}};
}

ToolResult HistologyTool::invoke(const json& arguments) {
    const auto path = string_arg(arguments, "feature_path");
    if (path.empty()) throw PreconditionError("histology_predict: feature_path must not be empty");
    return predict(path);
}

ToolResult HistologyTool::predict(const std::filesystem::path& feature_path) const {
    const auto start = Clock::now();
    ToolResult result;
    result.tool_name = kHistology;
    if (is_slide_image(feature_path)) {
        result.status = ToolStatus::skipped;
        result.reason = "feature extraction not available";
        return result;
    }
    std::vector<double> features;
    try {
        features = load_slide_features(feature_path);
    } catch (const Error& e) {
        return error_result(kHistology, e.what());
    }
    if (features.size() != kSlideFeatureDim) {
        return error_result(kHistology, "feature file has " + std::to_string(features.size()) +
                                            " values, expected " + std::to_string(kSlideFeatureDim));
    }
    const double p = mlp::predict_proba(*model_, features);
    const bool mutant = mlp::predict_mutant(p);
    char buf[96];
    std::snprintf(buf, sizeof buf, "IDH1 mutation probability %.4f; prediction: %s", p,
                  mutant ? "mutant" : "wildtype");
    result.payload = buf;
    result.data = {{"probability", p}, {"prediction", mutant ? "mutant" : "wildtype"}};
    result.citations.push_back("histology:" + feature_path.filename().string());
    result.latency_ms = elapsed_ms(start);
    return result;
}

}  // namespace moa::tools
