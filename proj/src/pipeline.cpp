#include "moa/pipeline.hpp"

#include <cstdlib>

#include <Eigen/Core>
#include <openssl/opensslv.h>

#include "moa/errors.hpp"
#include "moa/io.hpp"
#include "moa/log.hpp"

namespace moa::pipeline {

using nlohmann::json;

namespace {

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

// Cases without any clinical field still need a vector for the text baseline.
constexpr const char* kNoClinicalText = "No clinical information recorded.";

bool needs(const RunConfig& config, Modality modality) {
    for (auto kind : config.experiment.configs) {
        for (auto m : eval::feature_modalities(kind)) {
            if (m == modality) return true;
        }
    }
    return false;
}

CohortManifest eligible_only(const CohortManifest& manifest) {
    std::vector<PatientCase> cases;
    for (const auto* c : manifest.eligible_cases()) cases.push_back(*c);
    return make_manifest(std::move(cases));
}

std::map<std::string, Embedding> by_id(std::vector<Embedding> embeddings) {
    std::map<std::string, Embedding> out;
    for (auto& e : embeddings) {
        const auto id = e.id;
        out.emplace(id, std::move(e));
    }
    return out;
}

}  // namespace

Services make_services(const RunConfig& config, bool offline) {
    Services s;
    if (offline) {
        s.transport = std::make_shared<http::OfflineGuard>();
    } else {
        s.transport = std::make_shared<http::LiveTransport>();
    }

    auto ctx = std::make_shared<tools::ToolContext>();
    ctx->offline = offline;
    ctx->transport = s.transport;
    ctx->record_fixtures = !offline && config.tools.record_fixtures;
    ctx->retry = config.tools.retry;
    if (config.paths.fixtures) ctx->fixtures = std::make_shared<tools::FixtureStore>(*config.paths.fixtures);
    for (const char* service : {"pubmed", "oncokb", "web_search"}) {
        ctx->limiters[service] = std::make_shared<http::RateLimiter>(config.tools.requests_per_second);
    }
    if (offline && !ctx->fixtures) {
        log::warn("no_fixtures", {{"detail", "offline run without paths.fixtures; every networked tool call will fail"}});
    }
    s.tool_context = ctx;

    s.registry.add(std::make_shared<tools::PubMedTool>(ctx, config.tools.pubmed_base_url));
    s.registry.add(std::make_shared<tools::OncoKbTool>(ctx, env_or_empty("MOA_ONCOKB_TOKEN"),
                                                       config.tools.oncokb_base_url));
    std::shared_ptr<tools::SearchProvider> provider;
    const auto search_key = env_or_empty("MOA_SEARCH_KEY");
    if (!search_key.empty() && !config.tools.search_engine_id.empty()) {
        provider = std::make_shared<tools::CustomSearchProvider>(search_key, config.tools.search_engine_id,
                                                                  config.tools.search_endpoint);
    } else {
        provider = std::make_shared<tools::StubSearchProvider>();
    }
    s.registry.add(std::make_shared<tools::WebSearchTool>(ctx, provider));
    if (config.paths.histology_model) {
        auto model = std::make_shared<const mlp::MlpModel>(mlp::load_checkpoint(*config.paths.histology_model));
        s.registry.add(std::make_shared<tools::HistologyTool>(model));
    }

    s.embedder = make_embedder(config.embedder, s.transport,
                               std::make_shared<http::RateLimiter>(config.tools.requests_per_second));

    if (config.agent.backend == agent::BackendKind::mock) {
        s.backend = std::make_unique<agent::MockBackend>();
    } else {
        agent::LiveBackendConfig live;
        live.endpoint = config.llm.endpoint;
        live.model = config.llm.model;
        live.api_key = env_or_empty("MOA_LLM_API_KEY");
        live.retry = config.tools.retry;
        s.backend = std::make_unique<agent::ChatCompletionsBackend>(
            live, s.transport, std::make_shared<http::RateLimiter>(config.tools.requests_per_second));
    }
    return s;
}

kb::Index load_or_build_index(const RunConfig& config, TextEmbedder& embedder) {
    if (config.paths.kb_index && std::filesystem::exists(*config.paths.kb_index)) {
        auto index = kb::Index::load(*config.paths.kb_index);
        if (index.embedder_id() != embedder.id()) {
            throw ValidationError("knowledge-base index " + config.paths.kb_index->string() + " was built with " +
                                  index.embedder_id() + " but the configured embedder is " + embedder.id());
        }
        return index;
    }
    const auto& corpus_dir = config.require_existing(config.paths.corpus, "corpus");
    auto index = kb::build_from_corpus(kb::load_corpus(corpus_dir), config.kb.keywords, embedder,
                                       config.kb.chunk_size, config.kb.overlap);
    if (config.paths.kb_index) index.save(*config.paths.kb_index);
    log::info("kb_built", {{"chunks", index.chunks().size()}, {"embedder", index.embedder_id()}});
    return index;
}

std::vector<Embedding> report_embeddings(const RunConfig& config, const CohortManifest& manifest,
                                         Services& services, const std::filesystem::path& out_dir) {
    const auto index = load_or_build_index(config, *services.embedder);
    agent::ReportRunOptions options;
    options.out_dir = out_dir;
    options.workers = config.report_workers;
    const auto transcripts = agent::generate_reports(manifest, config.agent, services.registry, index,
                                                     *services.embedder, *services.backend, options);
    std::vector<std::pair<std::string, std::string>> items;
    items.reserve(transcripts.size());
    for (const auto& t : transcripts) items.emplace_back(t.patient_id, agent::clean_report(t.report_text));
    return embed_batch(*services.embedder, items, Modality::report, config.embedder.batch_size,
                       config.embedder.max_concurrency);
}

std::vector<Embedding> clinical_text_embeddings(const CohortManifest& manifest, TextEmbedder& embedder) {
    std::vector<std::pair<std::string, std::string>> items;
    for (const auto* c : manifest.eligible_cases()) {
        auto text = build_clinical_text(*c);
        if (text.empty()) {
            log::warn("clinical_text_placeholder", {{"patient_id", c->patient_id}});
            text = kNoClinicalText;
        }
        items.emplace_back(c->patient_id, std::move(text));
    }
    return embed_batch(embedder, items, Modality::clinical_text);
}

std::vector<Embedding> slide_embeddings(const CohortManifest& manifest) {
    std::vector<Embedding> out;
    for (const auto* c : manifest.eligible_cases()) {
        if (!c->slide_feature_path || tools::is_slide_image(*c->slide_feature_path)) continue;
        Embedding e{c->patient_id, tools::load_slide_features(*c->slide_feature_path), Modality::slide};
        if (e.dim() != tools::kSlideFeatureDim) {
            throw DimensionError("slide features for " + c->patient_id + " have " + std::to_string(e.dim()) +
                                 " values, expected " + std::to_string(tools::kSlideFeatureDim));
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::filesystem::path audit_path(const std::filesystem::path& results_path) {
    return results_path.string() + ".audit.jsonl";
}

ExperimentOutputs run_experiments(const RunConfig& config, bool offline, const std::filesystem::path& results_path) {
    const auto& cases_path = config.require_existing(config.paths.cases, "cases");
    const auto cohort = load_cohort(cases_path);
    const auto eligible = eligible_only(cohort);
    if (eligible.cases.empty()) throw PreconditionError("cohort has no labelled cases");

    auto services = make_services(config, offline);
    eval::FeatureSources sources;

    if (needs(config, Modality::report)) {
        std::vector<Embedding> reports;
        if (config.paths.report_embeddings && std::filesystem::exists(*config.paths.report_embeddings)) {
            reports = load_embeddings(*config.paths.report_embeddings);
        } else {
            // Reports used as classifier features never see the histology tool.
            RunConfig report_config = config;
            report_config.agent.histology_enabled = false;
            const auto out_dir = config.paths.output_dir.value_or(results_path.parent_path() / "agent");
            reports = report_embeddings(report_config, eligible, services, out_dir);
            if (config.paths.report_embeddings) save_embeddings(*config.paths.report_embeddings, reports);
        }
        sources.fixed[Modality::report] = by_id(std::move(reports));
    }
    if (needs(config, Modality::clinical_text)) {
        sources.fixed[Modality::clinical_text] = by_id(clinical_text_embeddings(eligible, *services.embedder));
    }
    if (needs(config, Modality::slide)) sources.fixed[Modality::slide] = by_id(slide_embeddings(eligible));

    std::map<std::string, Idh1Label> labels;
    for (const auto& c : eligible.cases) labels.emplace(c.patient_id, *c.idh1_label);
    const auto folds = eval::stratified_folds(labels, config.experiment.n_folds, config.seed);

    mlp::TrainConfig train = config.train;
    eval::ExperimentOptions options;
    options.hidden_dims = config.experiment.hidden_dims;
    options.seed = config.seed;
    options.workers = config.experiment.workers;

    ExperimentOutputs out;
    std::string records, audits;
    std::vector<eval::ExperimentResult> results;
    for (auto kind : config.experiment.configs) {
        train.seed = config.seed;
        auto run = eval::run_experiment(kind, sources, eligible, folds, train, options);
        records += io::dump_line(run.result.to_json()) + "\n";
        for (const auto& a : run.audits) {
            auto line = a.to_json();
            line["config"] = eval::to_string(kind);
            audits += io::dump_line(line) + "\n";
        }
        results.push_back(run.result);
        out.runs.push_back(std::move(run));
    }
    if (!results_path.empty()) {
        io::write_file(results_path, records);
        io::write_file(audit_path(results_path), audits);
    }

    std::map<eval::ExperimentKind, std::string> encoders;
    const auto text_encoder = services.embedder->id();
    for (auto kind : config.experiment.configs) {
        if (kind == eval::ExperimentKind::clinical_text || kind == eval::ExperimentKind::moa_no_histology) {
            encoders[kind] = text_encoder;
        } else if (kind == eval::ExperimentKind::moa_with_histology) {
            encoders[kind] = text_encoder + " + slide features";
        }
    }
    out.table = eval::format_table(results, encoders);
    return out;
}

json run_manifest(const std::string& command, const std::vector<std::string>& args, const RunConfig* config,
                  bool offline) {
    json m;
    m["command"] = command;
    m["args"] = args;
    m["version"] = kVersion;
    m["offline"] = offline;
    if (config) {
        m["config_path"] = config->source.string();
        m["config_sha256"] = config->source_sha256;
        m["seed"] = config->seed;
    } else {
        m["config_path"] = nullptr;
        m["config_sha256"] = nullptr;
        m["seed"] = nullptr;
    }
    m["build"] = {
        {"compiler", __VERSION__},
        {"cplusplus", __cplusplus},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"openssl", OPENSSL_VERSION_TEXT},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
    };
    return m;
}

void write_run_manifest(const std::filesystem::path& output, const json& manifest) {
    io::write_file(output, manifest.dump(2) + "\n");
}

}  // namespace moa::pipeline
