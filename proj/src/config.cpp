#include "moa/config.hpp"

#include <set>

#include "moa/errors.hpp"
#include "moa/hashing.hpp"
#include "moa/io.hpp"

namespace moa {

using nlohmann::json;

namespace {

void reject_unknown(const json& section, const std::set<std::string>& allowed, const std::string& where) {
    if (!section.is_object()) throw ValidationError("config section '" + where + "' must be an object");
    for (const auto& [key, _] : section.items()) {
        if (!allowed.contains(key)) throw ValidationError("unknown config key '" + where + "." + key + "'");
    }
}

template <typename T>
void read(const json& section, const char* key, T& target) {
    if (auto it = section.find(key); it != section.end() && !it->is_null()) target = it->get<T>();
}

void read_path(const json& section, const char* key, const std::filesystem::path& base,
               std::optional<std::filesystem::path>& target) {
    if (auto it = section.find(key); it != section.end() && !it->is_null()) {
        std::filesystem::path p = it->get<std::string>();
        target = p.is_relative() ? base / p : p;
    }
}

}  // namespace

const std::filesystem::path& RunConfig::require_existing(const std::optional<std::filesystem::path>& path,
                                                         const char* key) const {
    if (!path) throw ValidationError(std::string("config: paths.") + key + " is required");
    if (!std::filesystem::exists(*path)) {
        throw ValidationError(std::string("config: paths.") + key + " does not exist: " + path->string());
    }
    return *path;
}

void RunConfig::validate() const {
    agent.validate();
    train.validate();
    embedder.validate();
    if (experiment.n_folds < 2) throw ValidationError("experiment.n_folds must be >= 2");
    if (report_workers < 1) throw ValidationError("agent.workers must be >= 1");
    for (auto h : experiment.hidden_dims) {
        if (h == 0) throw ValidationError("experiment.hidden_dims entries must be >= 1");
    }
    if (kb.overlap >= kb.chunk_size) throw ValidationError("kb.overlap must be smaller than kb.chunk_size");
    if (agent.backend == agent::BackendKind::live_llm && llm.endpoint.empty()) {
        throw ValidationError("agent.backend live_llm requires llm.endpoint");
    }
    // Paths named in the file must resolve; outputs may not exist yet.
    for (const auto* p : {&paths.cases, &paths.corpus, &paths.fixtures, &paths.histology_model}) {
        if (*p && !std::filesystem::exists(**p)) {
            throw ValidationError("config path does not exist: " + (*p)->string());
        }
    }
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    try {
        reject_unknown(doc, {"seed", "offline", "paths", "agent", "llm", "tools", "kb", "embedder", "train", "experiment"},
                       "root");
        read(doc, "seed", cfg.seed);
        read(doc, "offline", cfg.offline);

        if (auto it = doc.find("paths"); it != doc.end()) {
            const auto& s = *it;
            reject_unknown(s, {"cases", "corpus", "fixtures", "output_dir", "kb_index", "histology_model",
                               "report_embeddings"},
                           "paths");
            read_path(s, "cases", base_dir, cfg.paths.cases);
            read_path(s, "corpus", base_dir, cfg.paths.corpus);
            read_path(s, "fixtures", base_dir, cfg.paths.fixtures);
            read_path(s, "output_dir", base_dir, cfg.paths.output_dir);
            read_path(s, "kb_index", base_dir, cfg.paths.kb_index);
            read_path(s, "histology_model", base_dir, cfg.paths.histology_model);
            read_path(s, "report_embeddings", base_dir, cfg.paths.report_embeddings);
        }
        if (auto it = doc.find("agent"); it != doc.end()) {
            const auto& s = *it;
            reject_unknown(s, {"enabled_tools", "histology_enabled", "fixed_query", "max_tool_rounds", "backend",
                               "rag_top_k", "max_results", "workers"},
                           "agent");
            if (s.contains("enabled_tools")) {
                cfg.agent.enabled_tools = s.at("enabled_tools").get<std::set<std::string>>();
            }
            read(s, "histology_enabled", cfg.agent.histology_enabled);
            read(s, "fixed_query", cfg.agent.fixed_query);
            read(s, "max_tool_rounds", cfg.agent.max_tool_rounds);
            if (s.contains("backend")) cfg.agent.backend = agent::parse_backend_kind(s.at("backend").get<std::string>());
            read(s, "rag_top_k", cfg.agent.rag_top_k);
            read(s, "max_results", cfg.agent.max_results);
            read(s, "workers", cfg.report_workers);
        }
        if (auto it = doc.find("llm"); it != doc.end()) {
            reject_unknown(*it, {"endpoint", "model"}, "llm");
            read(*it, "endpoint", cfg.llm.endpoint);
            read(*it, "model", cfg.llm.model);
        }
        if (auto it = doc.find("tools"); it != doc.end()) {
            const auto& s = *it;
            reject_unknown(s, {"pubmed_base_url", "oncokb_base_url", "search_endpoint", "search_engine_id",
                               "requests_per_second", "record_fixtures", "retry_attempts", "retry_backoff_ms"},
                           "tools");
            read(s, "pubmed_base_url", cfg.tools.pubmed_base_url);
            read(s, "oncokb_base_url", cfg.tools.oncokb_base_url);
            read(s, "search_endpoint", cfg.tools.search_endpoint);
            read(s, "search_engine_id", cfg.tools.search_engine_id);
            read(s, "requests_per_second", cfg.tools.requests_per_second);
            read(s, "record_fixtures", cfg.tools.record_fixtures);
            read(s, "retry_attempts", cfg.tools.retry.max_attempts);
            if (s.contains("retry_backoff_ms")) {
                cfg.tools.retry.initial_backoff = std::chrono::milliseconds(s.at("retry_backoff_ms").get<long>());
            }
        }
        if (auto it = doc.find("kb"); it != doc.end()) {
            reject_unknown(*it, {"keywords", "chunk_size", "overlap"}, "kb");
            read(*it, "keywords", cfg.kb.keywords);
            read(*it, "chunk_size", cfg.kb.chunk_size);
            read(*it, "overlap", cfg.kb.overlap);
        }
        if (auto it = doc.find("embedder"); it != doc.end()) {
            const auto& s = *it;
            reject_unknown(s, {"kind", "endpoint", "dimension", "max_tokens", "batch_size", "max_concurrency"},
                           "embedder");
            if (s.contains("kind")) cfg.embedder.kind = parse_embedder_kind(s.at("kind").get<std::string>());
            if (s.contains("endpoint") && !s.at("endpoint").is_null()) cfg.embedder.endpoint = s.at("endpoint").get<std::string>();
            read(s, "dimension", cfg.embedder.dimension);
            read(s, "max_tokens", cfg.embedder.max_tokens);
            read(s, "batch_size", cfg.embedder.batch_size);
            read(s, "max_concurrency", cfg.embedder.max_concurrency);
        }
        if (auto it = doc.find("train"); it != doc.end()) {
            const auto& s = *it;
            reject_unknown(s, {"learning_rate", "weight_decay", "batch_size", "epochs", "class_weights",
                               "decoupled_weight_decay"},
                           "train");
            read(s, "learning_rate", cfg.train.learning_rate);
            read(s, "weight_decay", cfg.train.weight_decay);
            read(s, "batch_size", cfg.train.batch_size);
            read(s, "epochs", cfg.train.epochs);
            read(s, "decoupled_weight_decay", cfg.train.decoupled_weight_decay);
            if (auto cw = s.find("class_weights"); cw != s.end()) {
                if (cw->is_string()) {
                    if (cw->get<std::string>() != "auto") throw ValidationError("train.class_weights must be \"auto\" or an object");
                } else {
                    reject_unknown(*cw, {"mutant", "wildtype"}, "train.class_weights");
                    mlp::ClassWeights w{};
                    w[static_cast<std::size_t>(class_index(Idh1Label::mutant))] = cw->at("mutant").get<double>();
                    w[static_cast<std::size_t>(class_index(Idh1Label::wildtype))] = cw->at("wildtype").get<double>();
                    cfg.train.class_weights = w;
                }
            }
        }
        if (auto it = doc.find("experiment"); it != doc.end()) {
            const auto& s = *it;
            reject_unknown(s, {"configs", "n_folds", "hidden_dims", "workers"}, "experiment");
            if (s.contains("configs")) {
                cfg.experiment.configs.clear();
                for (const auto& name : s.at("configs")) {
                    cfg.experiment.configs.push_back(eval::parse_experiment(name.get<std::string>()));
                }
            }
            read(s, "n_folds", cfg.experiment.n_folds);
            if (s.contains("hidden_dims")) {
                const auto dims = s.at("hidden_dims").get<std::vector<std::size_t>>();
                if (dims.size() != 3) throw ValidationError("experiment.hidden_dims must have exactly 3 entries");
                std::copy(dims.begin(), dims.end(), cfg.experiment.hidden_dims.begin());
            }
            read(s, "workers", cfg.experiment.workers);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    auto cfg = parse_run_config(doc, path.parent_path());
    cfg.source = path;
    cfg.source_sha256 = sha256_hex(text);
    return cfg;
}

}  // namespace moa
