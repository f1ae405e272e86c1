#include "moa/cli.hpp"

#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "moa/errors.hpp"
#include "moa/io.hpp"
#include "moa/log.hpp"
#include "moa/pipeline.hpp"

namespace moa::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const OfflineViolation*>(&e)) return "offline_violation";
    if (dynamic_cast<const TransportError*>(&e)) return "transport";
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const ValidationError*>(&e)) return "validation";
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
    if (dynamic_cast<const PreconditionError*>(&e)) return "precondition";
    if (dynamic_cast<const Error*>(&e)) return "runtime";
    return "internal";
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

fs::path manifest_path_for_file(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

// Embedder flags shared by kb and embed subcommands.
struct EmbedderFlags {
    std::string kind = "hashed";
    std::string endpoint;
    std::size_t dimension = 768;
    std::size_t max_tokens = 8192;

    void attach(CLI::App* app) {
        app->add_option("--embedder", kind, "hashed|remote")->check(CLI::IsMember({"hashed", "remote"}));
        app->add_option("--endpoint", endpoint, "Remote embedding endpoint");
        app->add_option("--dimension", dimension, "Embedding dimension")->check(CLI::PositiveNumber);
        app->add_option("--max-tokens", max_tokens, "Token limit per text")->check(CLI::PositiveNumber);
    }
    EmbedderConfig config() const {
        EmbedderConfig c;
        c.kind = parse_embedder_kind(kind);
        if (!endpoint.empty()) c.endpoint = endpoint;
        c.dimension = dimension;
        c.max_tokens = max_tokens;
        c.validate();
        return c;
    }
};

std::shared_ptr<http::Transport> transport_for(bool offline) {
    if (offline) return std::make_shared<http::OfflineGuard>();
    return std::make_shared<http::LiveTransport>();
}

// Labels come from any line-delimited file with patient_id and idh1_label keys
// (a patient-case file qualifies). Unlabelled records are skipped.
std::map<std::string, Idh1Label> load_labels(const fs::path& path) {
    std::map<std::string, Idh1Label> labels;
    io::for_each_jsonl(path, [&](std::size_t line, const json& record) {
        if (!record.is_object() || !record.contains("patient_id") || !record.at("patient_id").is_string()) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": record needs a string patient_id");
        }
        const auto it = record.find("idh1_label");
        if (it == record.end() || it->is_null()) return;
        if (!it->is_string()) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": idh1_label must be a string");
        }
        const auto id = record.at("patient_id").get<std::string>();
        if (!labels.emplace(id, parse_label(it->get<std::string>())).second) {
            throw ValidationError("duplicate patient_id in labels: " + id);
        }
    });
    return labels;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal oncology agent toolkit for IDH1 mutation prediction", "moa"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "debug|info|warn|error")
        ->check(CLI::IsMember({"debug", "info", "warn", "error"}));
    app.set_version_flag("--version", pipeline::kVersion);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a patient-case file and print a cohort summary");
    fs::path ingest_cases;
    bool strict = false;
    ingest->add_option("--cases", ingest_cases, "Patient-case file")->required();
    ingest->add_flag("--strict", strict, "Fail when any warning was raised");

    // kb
    auto* kb_cmd = app.add_subcommand("kb", "Knowledge-base index");
    kb_cmd->require_subcommand(1);
    auto* kb_build = kb_cmd->add_subcommand("build", "Filter, chunk and embed a document corpus");
    fs::path kb_corpus, kb_out;
    std::string kb_keywords;
    std::size_t chunk_size = kb::kDefaultChunkSize, overlap = kb::kDefaultOverlap;
    EmbedderFlags kb_embedder;
    bool kb_offline = false;
    kb_build->add_option("--corpus", kb_corpus, "Directory of .txt/.md documents")->required();
    kb_build->add_option("--keywords", kb_keywords, "Comma-separated filter keywords");
    kb_build->add_option("--out", kb_out, "Index file")->required();
    kb_build->add_option("--chunk-size", chunk_size)->check(CLI::PositiveNumber);
    kb_build->add_option("--overlap", overlap);
    kb_build->add_flag("--offline", kb_offline);
    kb_embedder.attach(kb_build);

    auto* kb_query = kb_cmd->add_subcommand("query", "Retrieve the top-k chunks for a query");
    fs::path kb_index;
    std::string query_text;
    std::size_t top_k = kb::kDefaultTopK;
    EmbedderFlags query_embedder;
    bool query_offline = false;
    kb_query->add_option("--index", kb_index)->required();
    kb_query->add_option("--query", query_text)->required();
    kb_query->add_option("-k", top_k)->check(CLI::PositiveNumber);
    kb_query->add_flag("--offline", query_offline);
    query_embedder.attach(kb_query);

    // report
    auto* report_cmd = app.add_subcommand("report", "Agent report generation");
    report_cmd->require_subcommand(1);
    auto* report_gen = report_cmd->add_subcommand("generate", "Run the agent once per patient");
    fs::path report_cases, report_config, report_out;
    bool report_offline = false, no_histology = false;
    report_gen->add_option("--cases", report_cases)->required();
    report_gen->add_option("--config", report_config)->required();
    report_gen->add_option("--out", report_out, "Output directory")->required();
    report_gen->add_flag("--offline", report_offline);
    report_gen->add_flag("--no-histology", no_histology);

    // embed
    auto* embed_cmd = app.add_subcommand("embed", "Embedding utilities");
    embed_cmd->require_subcommand(1);
    auto* embed_norm = embed_cmd->add_subcommand("normalize", "Z-score embeddings with stored statistics");
    fs::path stats_path, norm_in, norm_out;
    bool fit = false;
    embed_norm->add_option("--stats", stats_path)->required();
    embed_norm->add_option("--in", norm_in)->required();
    embed_norm->add_option("--out", norm_out)->required();
    embed_norm->add_flag("--fit", fit, "Fit statistics on --in and write them to --stats first");

    auto* embed_texts = embed_cmd->add_subcommand("texts", "Embed every report in a directory");
    fs::path texts_in, texts_out;
    std::string texts_modality = "report";
    bool no_clean = false, texts_offline = false;
    EmbedderFlags texts_embedder;
    embed_texts->add_option("--in", texts_in, "Directory of .txt reports")->required();
    embed_texts->add_option("--out", texts_out)->required();
    embed_texts->add_option("--modality", texts_modality)->check(CLI::IsMember({"report", "clinical_text"}));
    embed_texts->add_flag("--no-clean", no_clean, "Embed the raw text");
    embed_texts->add_flag("--offline", texts_offline);
    texts_embedder.attach(embed_texts);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the MLP classifier on labelled embeddings");
    fs::path train_embeddings, train_labels, train_config, train_out;
    train_cmd->add_option("--embeddings", train_embeddings)->required();
    train_cmd->add_option("--labels", train_labels)->required();
    train_cmd->add_option("--config", train_config)->required();
    train_cmd->add_option("--out", train_out)->required();

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "Cross-validated comparison");
    exp_cmd->require_subcommand(1);
    auto* exp_run = exp_cmd->add_subcommand("run", "Run every configured experiment");
    fs::path exp_config, exp_out;
    bool exp_offline = false;
    std::optional<std::uint64_t> exp_seed;
    exp_run->add_option("--config", exp_config)->required();
    exp_run->add_option("--out", exp_out, "Result records (default: <output_dir>/results.jsonl)");
    exp_run->add_flag("--offline", exp_offline);
    exp_run->add_option("--seed", exp_seed, "Override the config seed");

    if (!args.empty() && !args.front().starts_with("-")) {
        const auto subs = app.get_subcommands({});
        const bool known = std::any_of(subs.begin(), subs.end(), [&](const CLI::App* s) { return s->get_name() == args.front(); });
        if (!known) {
            err << "error: unknown subcommand '" << args.front() << "'\n" << app.help();
            return kExitUsage;
        }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << pipeline::kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    log::set_min_level(log_level == "debug"  ? log::Level::debug
                       : log_level == "warn" ? log::Level::warn
                       : log_level == "error" ? log::Level::error
                                              : log::Level::info);

    try {
        if (ingest->parsed()) {
            const auto manifest = load_cohort(ingest_cases);
            json summary = {{"cases", manifest.cases.size()},
                            {"eligible", manifest.eligible_cases().size()},
                            {"mutant", manifest.class_counts.count(Idh1Label::mutant)
                                           ? manifest.class_counts.at(Idh1Label::mutant) : 0},
                            {"wildtype", manifest.class_counts.count(Idh1Label::wildtype)
                                             ? manifest.class_counts.at(Idh1Label::wildtype) : 0},
                            {"ineligible", manifest.ineligible_ids},
                            {"warnings", manifest.warnings}};
            out << summary.dump() << "\n";
            if (strict && !manifest.warnings.empty()) {
                throw ValidationError("--strict: " + std::to_string(manifest.warnings.size()) + " warning(s)");
            }
            return kExitOk;
        }

        if (kb_build->parsed()) {
            auto transport = transport_for(kb_offline);
            auto embedder = make_embedder(kb_embedder.config(), transport);
            const auto keywords = kb_keywords.empty() ? kb::default_keywords() : split_list(kb_keywords);
            auto index = kb::build_from_corpus(kb::load_corpus(kb_corpus), keywords, *embedder, chunk_size, overlap);
            index.save(kb_out);
            out << json{{"chunks", index.chunks().size()}, {"embedder", index.embedder_id()}, {"out", kb_out.string()}}
                       .dump()
                << "\n";
            pipeline::write_run_manifest(manifest_path_for_file(kb_out),
                                         pipeline::run_manifest("kb build", args, nullptr, kb_offline));
            return kExitOk;
        }

        if (kb_query->parsed()) {
            const auto index = kb::Index::load(kb_index);
            auto cfg = query_embedder.config();
            if (query_embedder.kind == "hashed") cfg.dimension = index.dimension();
            auto embedder = make_embedder(cfg, transport_for(query_offline));
            if (embedder->id() != index.embedder_id()) {
                throw ValidationError("index was built with " + index.embedder_id() + ", query embedder is " +
                                      embedder->id());
            }
            std::size_t rank = 1;
            for (const auto& hit : index.retrieve(query_text, top_k, *embedder)) {
                out << json{{"rank", rank++},
                            {"chunk_id", hit.chunk->chunk_id},
                            {"title", hit.chunk->title},
                            {"score", hit.score},
                            {"text", hit.chunk->text}}
                           .dump()
                    << "\n";
            }
            return kExitOk;
        }

        if (report_gen->parsed()) {
            auto config = load_run_config(report_config);
            config.paths.cases = report_cases;
            const bool offline = report_offline || config.offline;
            if (no_histology) config.agent.histology_enabled = false;
            const auto cohort = load_cohort(config.require_existing(config.paths.cases, "cases"));
            auto services = pipeline::make_services(config, offline);
            const auto index = pipeline::load_or_build_index(config, *services.embedder);
            agent::ReportRunOptions options{report_out, config.report_workers};
            const auto transcripts = agent::generate_reports(cohort, config.agent, services.registry, index,
                                                             *services.embedder, *services.backend, options);
            std::size_t histology_calls = 0;
            for (const auto& t : transcripts) histology_calls += t.invocations_of(tools::kHistology);
            out << json{{"reports", transcripts.size()}, {"histology_calls", histology_calls},
                        {"out", report_out.string()}}
                       .dump()
                << "\n";
            pipeline::write_run_manifest(report_out / "run_manifest.json",
                                         pipeline::run_manifest("report generate", args, &config, offline));
            return kExitOk;
        }

        if (embed_norm->parsed()) {
            const auto embeddings = load_embeddings(norm_in);
            NormalizationStats stats;
            if (fit) {
                stats = fit_normalizer(embeddings);
                save_stats(stats_path, stats);
            } else {
                stats = load_stats(stats_path);
            }
            std::vector<Embedding> normalized;
            normalized.reserve(embeddings.size());
            for (const auto& e : embeddings) normalized.push_back(apply_normalizer(stats, e));
            save_embeddings(norm_out, normalized);
            out << json{{"embeddings", normalized.size()}, {"dimension", stats.mean.size()}, {"out", norm_out.string()}}
                       .dump()
                << "\n";
            pipeline::write_run_manifest(manifest_path_for_file(norm_out),
                                         pipeline::run_manifest("embed normalize", args, nullptr, true));
            return kExitOk;
        }

        if (embed_texts->parsed()) {
            if (!fs::is_directory(texts_in)) throw PreconditionError("--in is not a directory: " + texts_in.string());
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(texts_in)) {
                if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            std::vector<std::pair<std::string, std::string>> items;
            for (const auto& f : files) {
                auto text = io::read_file(f);
                items.emplace_back(f.stem().string(), no_clean ? text : agent::clean_report(text));
            }
            auto cfg = texts_embedder.config();
            auto embedder = make_embedder(cfg, transport_for(texts_offline));
            const auto embeddings =
                embed_batch(*embedder, items, parse_modality(texts_modality), cfg.batch_size, cfg.max_concurrency);
            save_embeddings(texts_out, embeddings);
            out << json{{"embeddings", embeddings.size()}, {"embedder", embedder->id()}, {"out", texts_out.string()}}
                       .dump()
                << "\n";
            pipeline::write_run_manifest(manifest_path_for_file(texts_out),
                                         pipeline::run_manifest("embed texts", args, nullptr, texts_offline));
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            const auto config = load_run_config(train_config);
            const auto labels = load_labels(train_labels);
            std::vector<std::vector<double>> rows;
            mlp::Dataset data;
            std::size_t unlabelled = 0;
            for (const auto& e : load_embeddings(train_embeddings)) {
                const auto it = labels.find(e.id);
                if (it == labels.end()) {
                    ++unlabelled;
                    continue;
                }
                rows.push_back(e.vector);
                data.labels.push_back(class_index(it->second));
            }
            if (unlabelled > 0) log::warn("unlabelled_embeddings", {{"count", unlabelled}});
            if (rows.empty()) throw PreconditionError("no embedding has a label in " + train_labels.string());
            data.features = mlp::to_matrix(rows);
            auto train = config.train;
            train.seed = config.seed;
            auto model = mlp::init_model(data.features.cols(), config.experiment.hidden_dims, config.seed);
            const auto result = mlp::train(std::move(model), data, train);
            mlp::save_checkpoint(train_out, result.model);
            out << json{{"examples", rows.size()},
                        {"input_dim", data.features.cols()},
                        {"final_loss", result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()},
                        {"out", train_out.string()}}
                       .dump()
                << "\n";
            pipeline::write_run_manifest(manifest_path_for_file(train_out),
                                         pipeline::run_manifest("train", args, &config, true));
            return kExitOk;
        }

        if (exp_run->parsed()) {
            auto config = load_run_config(exp_config);
            if (exp_seed) config.seed = *exp_seed;
            const bool offline = exp_offline || config.offline;
            if (exp_out.empty()) exp_out = config.paths.output_dir.value_or(fs::path(".")) / "results.jsonl";
            const auto outputs = pipeline::run_experiments(config, offline, exp_out);
            out << outputs.table;
            pipeline::write_run_manifest(manifest_path_for_file(exp_out),
                                         pipeline::run_manifest("experiment run", args, &config, offline));
            return kExitOk;
        }
    } catch (const std::exception& e) {
        err << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace moa::cli
