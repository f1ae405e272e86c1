// Generates the synthetic demo cohort shipped in data/demo: patient cases, slide
// feature files, a small document corpus, recorded tool fixtures, a histology
// checkpoint and the run config. Every value comes from one seeded generator.

#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "moa/agent.hpp"
#include "moa/classifier.hpp"
#include "moa/errors.hpp"
#include "moa/hashing.hpp"
#include "moa/io.hpp"
#include "moa/knowledge_base.hpp"
#include "moa/log.hpp"
#include "moa/text_embedder.hpp"
#include "moa/tools.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Variant {
    const char* gene;
    const char* alteration;
    const char* oncokb;  // oncogenicity string as the annotation service reports it
};

// Genes the report filter keeps.
const std::vector<Variant> kSupportive = {
    {"TP53", "R273H", "Oncogenic"}, {"TP53", "R248Q", "Oncogenic"},      {"TP53", "R175H", "Oncogenic"},
    {"TP53", "Y220C", "Likely Oncogenic"}, {"CIC", "R215W", "Likely Oncogenic"}, {"CIC", "R1515H", "Likely Oncogenic"},
};
// Alterations the filter drops.
const std::vector<Variant> kOther = {
    {"EGFR", "A289V", "Oncogenic"}, {"PTEN", "R130Q", "Oncogenic"}, {"NF1", "R1947*", "Likely Oncogenic"},
    {"ATRX", "Q119*", "Likely Oncogenic"}, {"PIK3CA", "E545K", "Oncogenic"}, {"TERT", "C228T", "Unknown"},
    {"TP53", "P72R", "Unknown"},
};

moa::Oncogenicity to_oncogenicity(const std::string& oncokb) {
    if (oncokb == "Oncogenic") return moa::Oncogenicity::oncogenic;
    if (oncokb == "Likely Oncogenic") return moa::Oncogenicity::likely_oncogenic;
    return moa::Oncogenicity::unknown;
}

class Generator {
public:
    explicit Generator(std::uint64_t seed) : rng_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(rng_); }
    bool chance(double p) { return uniform() < p; }
    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng_)];
    }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

std::string pick_weighted(Generator& g, const std::vector<std::pair<std::string, double>>& options) {
    double u = g.uniform();
    for (const auto& [value, p] : options) {
        if (u < p) return value;
        u -= p;
    }
    return options.back().first;
}

// Slide features: a few latent factors mixed into 768 correlated dimensions plus
// isotropic noise. Class means differ along the first `signal_factors` factors.
struct SlideSignal {
    double separation = 1.2;  // distance between class means in latent space
    std::size_t latent_factors = 12;
    std::size_t signal_factors = 3;
    double noise = 0.5;
};

class SlideModel {
public:
    SlideModel(Generator& g, SlideSignal signal) : signal_(signal) {
        mixing_.resize(moa::tools::kSlideFeatureDim, std::vector<double>(signal.latent_factors));
        for (auto& row : mixing_) {
            for (auto& w : row) w = g.normal(0.0, 1.0 / std::sqrt(static_cast<double>(signal.latent_factors)));
        }
    }

    std::vector<double> sample(Generator& g, bool mutant) const {
        std::vector<double> z(signal_.latent_factors);
        const double shift = signal_.separation / std::sqrt(static_cast<double>(signal_.signal_factors));
        for (std::size_t k = 0; k < z.size(); ++k) {
            z[k] = g.normal();
            if (k < signal_.signal_factors) z[k] += (mutant ? 0.5 : -0.5) * shift;
        }
        std::vector<double> v(moa::tools::kSlideFeatureDim);
        for (std::size_t i = 0; i < v.size(); ++i) {
            double x = g.normal(0.0, signal_.noise);
            for (std::size_t k = 0; k < z.size(); ++k) x += mixing_[i][k] * z[k];
            v[i] = std::round(x * 1e4) / 1e4;
        }
        return v;
    }

private:
    SlideSignal signal_;
    std::vector<std::vector<double>> mixing_;
};

std::string format_vector(const std::vector<double>& v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < v.size(); ++i) out << v[i] << ((i + 1) % 16 == 0 || i + 1 == v.size() ? '\n' : ' ');
    return out.str();
}

moa::PatientCase make_case(Generator& g, const std::string& id, std::optional<bool> mutant) {
    moa::PatientCase c;
    c.patient_id = id;
    const bool m = mutant.value_or(g.chance(0.75));
    if (mutant) c.idh1_label = m ? moa::Idh1Label::mutant : moa::Idh1Label::wildtype;

    if (!g.chance(0.04)) c.age_years = std::clamp(static_cast<int>(std::lround(g.normal(m ? 40 : 47, 13))), 18, 88);
    if (!g.chance(0.03)) c.sex = g.chance(0.56) ? "male" : "female";
    const std::string tumor = m ? pick_weighted(g, {{"Oligodendroglioma", 0.38}, {"Astrocytoma", 0.42}, {"Mixed glioma", 0.20}})
                                : pick_weighted(g, {{"Oligodendroglioma", 0.28}, {"Astrocytoma", 0.50}, {"Mixed glioma", 0.22}});
    if (!g.chance(0.03)) c.tumor_class = tumor;
    if (!g.chance(0.05)) {
        if (tumor == "Oligodendroglioma") {
            c.histologic_morphology = g.chance(0.6) ? "Oligodendroglioma, NOS" : "Oligodendroglioma, anaplastic";
        } else if (tumor == "Astrocytoma") {
            c.histologic_morphology = g.chance(0.6) ? "Astrocytoma, NOS" : "Astrocytoma, anaplastic";
        } else {
            c.histologic_morphology = "Mixed glioma";
        }
    }
    if (!g.chance(0.08)) c.treatment_type = g.chance(0.5) ? "Radiation Therapy, NOS" : "Pharmaceutical Therapy, NOS";
    if (!g.chance(0.15)) {
        c.therapeutic_procedure = pick_weighted(g, {{"Temozolomide", 0.5}, {"External beam radiation", 0.3}, {"Surgical resection", 0.2}});
    }

    std::vector<moa::GeneAnnotation> annotations;
    if (g.chance(m ? 0.70 : 0.15)) {
        const auto& v = g.pick(kSupportive);
        annotations.push_back({v.gene, v.alteration, to_oncogenicity(v.oncokb), "OncoKB"});
    }
    if (g.chance(0.45)) {
        const auto& v = g.pick(kOther);
        annotations.push_back({v.gene, v.alteration, to_oncogenicity(v.oncokb), "OncoKB"});
    }
    if (!annotations.empty() || g.chance(0.5)) c.molecular_summary = annotations;
    return c;
}

// ---------------------------------------------------------------- synthetic services

std::string query_param(const std::string& url, const std::string& key) {
    const auto q = url.find('?');
    if (q == std::string::npos) return {};
    std::stringstream ss(url.substr(q + 1));
    for (std::string kv; std::getline(ss, kv, '&');) {
        const auto eq = kv.find('=');
        if (eq != std::string::npos && kv.substr(0, eq) == key) {
            std::string raw = kv.substr(eq + 1), out;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (raw[i] == '%' && i + 2 < raw.size()) {
                    out += static_cast<char>(std::stoi(raw.substr(i + 1, 2), nullptr, 16));
                    i += 2;
                } else {
                    out += raw[i] == '+' ? ' ' : raw[i];
                }
            }
            return out;
        }
    }
    return {};
}

std::string xml_escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

// Answers the PubMed, OncoKB and search requests the demo agent makes, so the
// real clients can record fixtures through their normal code path.
class SyntheticServices final : public moa::http::Transport {
public:
    moa::http::Response send(const moa::http::Request& request) override {
        const auto& url = request.url;
        if (url.find("/esearch.fcgi") != std::string::npos) return esearch(query_param(url, "term"));
        if (url.find("/efetch.fcgi") != std::string::npos) return efetch(query_param(url, "id"));
        if (url.find("/annotate/mutations/byProteinChange") != std::string::npos) {
            return oncokb(query_param(url, "hugoSymbol"), query_param(url, "alteration"));
        }
        if (url.find("customsearch") != std::string::npos) return search(query_param(url, "q"));
        return {404, "{}"};
    }

private:
    static std::string pmid_for(const std::string& term, int i) {
        return std::to_string(30000000 + moa::fnv1a64(term + "#" + std::to_string(i)) % 5000000);
    }

    moa::http::Response esearch(const std::string& term) {
        json ids = json::array();
        for (int i = 0; i < 3; ++i) {
            const auto id = pmid_for(term, i);
            ids.push_back(id);
            std::string subject = term.substr(term.find(' ') + 1);
            articles_[id] = {"IDH1 mutation frequency and prognosis in " + subject + " (cohort " + std::to_string(i + 1) + ")",
                             "IDH1 R132H mutations were detected in the majority of lower-grade " + subject +
                                 " specimens and were associated with younger age at diagnosis and longer survival. "
                                 "Co-occurring TP53 alterations characterised astrocytic tumours, while CIC "
                                 "mutations were enriched in oligodendroglial tumours with 1p/19q codeletion."};
        }
        return {200, json{{"header", {{"type", "esearch"}}},
                          {"esearchresult", {{"count", "3"}, {"retmax", "3"}, {"idlist", ids}}}}
                         .dump()};
    }

    moa::http::Response efetch(const std::string& id_list) {
        std::ostringstream xml;
        xml << "<?xml version=\"1.0\" ?>\n<PubmedArticleSet>\n";
        std::stringstream ss(id_list);
        for (std::string id; std::getline(ss, id, ',');) {
            const auto& [title, abstract] = articles_.at(id);
            xml << "<PubmedArticle><MedlineCitation><PMID Version=\"1\">" << id << "</PMID><Article><ArticleTitle>"
                << xml_escape(title) << "</ArticleTitle><Abstract><AbstractText>" << xml_escape(abstract)
                << "</AbstractText></Abstract></Article></MedlineCitation></PubmedArticle>\n";
        }
        xml << "</PubmedArticleSet>\n";
        return {200, xml.str()};
    }

    static moa::http::Response oncokb(const std::string& gene, const std::string& alteration) {
        std::string oncogenic = "Unknown";
        for (const auto* list : {&kSupportive, &kOther}) {
            for (const auto& v : *list) {
                if (gene == v.gene && alteration == v.alteration) oncogenic = v.oncokb;
            }
        }
        json body = {{"query", {{"hugoSymbol", gene}, {"alteration", alteration}}},
                     {"geneExist", true},
                     {"variantExist", oncogenic != "Unknown"},
                     {"oncogenic", oncogenic},
                     {"mutationEffect", {{"knownEffect", oncogenic == "Unknown" ? "Unknown" : "Loss-of-function"}}},
                     {"geneSummary", gene + " is recurrently altered in diffuse gliomas."},
                     {"variantSummary", "The " + gene + " " + alteration + " alteration is " +
                                            (oncogenic == "Unknown" ? std::string("of unknown significance")
                                                                    : "considered " + oncogenic) + "."},
                     {"tumorTypeSummary", ""}};
        return {200, body.dump()};
    }

    static moa::http::Response search(const std::string& query) {
        std::string subject = query;
        for (const char* prefix : {"IDH1 mutation "}) {
            if (subject.rfind(prefix, 0) == 0) subject = subject.substr(std::string(prefix).size());
        }
        json items = json::array();
        items.push_back({{"title", "IDH-mutant " + subject + " overview"},
                         {"snippet", "IDH1 and IDH2 mutations define a biologically distinct group of lower-grade " +
                                         subject + " with better prognosis than IDH-wildtype tumours."},
                         {"link", "https://example.org/glioma/" + std::to_string(moa::fnv1a64(query) % 100000)}});
        items.push_back({{"title", "Molecular classification of diffuse gliomas"},
                         {"snippet", "Integrated diagnosis combines histology with IDH status, 1p/19q codeletion, "
                                     "ATRX and TP53 alterations."},
                         {"link", "https://example.org/classification"}});
        return {200, json{{"kind", "customsearch#search"}, {"items", items}}.dump()};
    }

    std::map<std::string, std::pair<std::string, std::string>> articles_;
};

// ---------------------------------------------------------------- corpus

struct CorpusDoc {
    const char* file;
    const char* title;
    std::vector<const char*> paragraphs;
};

const std::vector<CorpusDoc> kCorpus = {
    {"idh_mutant_glioma.md", "IDH mutations in diffuse glioma",
     {"Mutations in isocitrate dehydrogenase 1 (IDH1) occur early in the development of diffuse gliomas. "
      "The most frequent alteration is the R132H substitution, which confers a neomorphic activity producing "
      "the oncometabolite 2-hydroxyglutarate. IDH-mutant tumours show a glioma CpG island methylator phenotype.",
      "Lower-grade gliomas carrying IDH mutations arise in younger adults and are associated with markedly longer "
      "survival than IDH-wildtype tumours of the same grade. For that reason the IDH status is central to the "
      "integrated diagnosis of astrocytoma and oligodendroglioma.",
      "Immunohistochemistry with an antibody specific for IDH1 R132H detects most mutations. Sequencing is "
      "recommended when staining is negative in a patient younger than 55 years, because non-canonical IDH1 "
      "and IDH2 mutations are missed by the antibody.",
      "Histology alone is an unreliable guide to IDH status, yet morphological features learned from whole-slide "
      "images carry information about the underlying molecular alterations."}},
    {"oligodendroglioma.md", "Oligodendroglioma, IDH-mutant and 1p/19q-codeleted",
     {"Oligodendroglioma is defined by the combination of an IDH mutation and whole-arm codeletion of chromosome "
      "arms 1p and 19q. Typical histological features include uniform round nuclei, perinuclear haloes and a "
      "delicate branching capillary network.",
      "Mutations of CIC on chromosome 19q and of FUBP1 on 1p are frequent in oligodendroglioma and are thought to "
      "act on the remaining allele. TERT promoter mutations are almost universal in this tumour type.",
      "Oligodendrogliomas respond better to combined radiotherapy and chemotherapy than other diffuse gliomas, and "
      "median survival exceeds ten years in many series."}},
    {"astrocytoma.md", "Astrocytoma, IDH-mutant",
     {"IDH-mutant astrocytoma lacks 1p/19q codeletion and typically carries inactivating mutations of TP53 and "
      "ATRX. Loss of nuclear ATRX expression together with strong p53 staining supports the diagnosis.",
      "Grading of IDH-mutant astrocytoma considers mitotic activity, microvascular proliferation and necrosis, as "
      "well as homozygous deletion of CDKN2A/B, which indicates an aggressive clinical course.",
      "TP53 hotspot mutations such as R273H, R248Q and R175H are reported in most IDH-mutant astrocytomas, which "
      "makes an oncogenic TP53 alteration a useful correlate of IDH mutation in lower-grade glioma."}},
    {"glioma_treatment.md", "Treatment of lower-grade glioma",
     {"Maximal safe resection is followed by radiotherapy and alkylating chemotherapy in patients at high risk of "
      "progression. Temozolomide and the PCV regimen are the usual agents.",
      "Inhibitors of mutant IDH1 and IDH2 delay progression in residual or recurrent IDH-mutant glioma and are "
      "increasingly used after surgery in patients without high-risk features."}},
    {"breast_cancer.md", "HER2-positive breast cancer",
     {"Amplification of ERBB2 defines the HER2-positive subtype of breast cancer. Trastuzumab combined with "
      "chemotherapy improves survival in both early and metastatic disease.",
      "Hormone receptor status and Ki-67 proliferation index guide the choice of adjuvant endocrine therapy."}},
    {"lung_adenocarcinoma.md", "EGFR-mutant lung adenocarcinoma",
     {"Activating EGFR mutations such as exon 19 deletions and L858R occur in a subset of lung adenocarcinomas, "
      "most often in never-smokers. Tyrosine kinase inhibitors are the standard first-line therapy.",
      "Resistance frequently arises through the T790M mutation or MET amplification."}},
    {"colorectal_msi.md", "Microsatellite instability in colorectal cancer",
     {"Deficient mismatch repair leads to microsatellite instability and a high tumour mutational burden. "
      "These tumours respond well to immune checkpoint blockade.",
      "Screening for Lynch syndrome is recommended for every newly diagnosed colorectal carcinoma."}},
};

void write_corpus(const fs::path& dir) {
    for (const auto& doc : kCorpus) {
        std::string text = std::string("# ") + doc.title + "\n\n";
        for (const auto* p : doc.paragraphs) text += std::string(p) + "\n\n";
        moa::io::write_file(dir / doc.file, text);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic demo dataset"};
    fs::path out = fs::path(MOA_SOURCE_DIR) / "data" / "demo";
    std::size_t n_labelled = 400, n_unlabelled = 2, n_histology_train = 300;
    std::uint64_t seed = 20240501;
    SlideSignal signal;
    app.add_option("--out", out);
    app.add_option("--patients", n_labelled, "Labelled patients");
    app.add_option("--seed", seed);
    app.add_option("--slide-separation", signal.separation, "Distance between class means of slide features");
    app.add_option("--latent-factors", signal.latent_factors)->check(CLI::Range(1, 64));
    app.add_option("--signal-factors", signal.signal_factors)->check(CLI::Range(1, 64));
    app.add_option("--slide-noise", signal.noise);
    CLI11_PARSE(app, argc, argv);

    try {
        Generator g(seed);
        if (signal.signal_factors > signal.latent_factors) throw moa::Error("--signal-factors exceeds --latent-factors");
        const SlideModel slides(g, signal);
        fs::remove_all(out / "fixtures");
        fs::remove_all(out / "slides");
        fs::remove_all(out / "corpus");

        // Cohort: exact class proportions, shuffled.
        const std::size_t n_mutant = static_cast<std::size_t>(std::lround(0.766 * static_cast<double>(n_labelled)));
        std::vector<bool> labels(n_labelled, false);
        std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_mutant), true);
        std::shuffle(labels.begin(), labels.end(), g.engine());

        std::vector<moa::PatientCase> cases;
        for (std::size_t i = 0; i < n_labelled + n_unlabelled; ++i) {
            std::ostringstream id;
            id << "DEMO-" << std::setw(4) << std::setfill('0') << i + 1;
            std::optional<bool> label;
            if (i < n_labelled) label = labels[i];
            auto c = make_case(g, id.str(), label);
            const bool mutant = label.value_or(g.chance(0.75));
            const fs::path rel = fs::path("slides") / (id.str() + ".txt");
            moa::io::write_file(out / rel, format_vector(slides.sample(g, mutant)));
            c.slide_feature_path = rel;
            cases.push_back(std::move(c));
        }
        moa::save_cohort(out / "cases.jsonl", cases);
        write_corpus(out / "corpus");

        // Histology checkpoint trained on separate synthetic slides (no cohort patient).
        std::vector<std::vector<double>> rows;
        moa::mlp::Dataset train_set;
        for (std::size_t i = 0; i < n_histology_train; ++i) {
            const bool mutant = g.chance(0.75);
            rows.push_back(slides.sample(g, mutant));
            train_set.labels.push_back(mutant ? 1 : 0);
        }
        train_set.features = moa::mlp::to_matrix(rows);
        moa::mlp::TrainConfig tc;
        tc.epochs = 60;
        tc.learning_rate = 1e-3;
        tc.seed = seed;
        auto model = moa::mlp::init_model(moa::tools::kSlideFeatureDim, {32, 16, 8}, seed);
        moa::mlp::save_checkpoint(out / "models" / "histology.ckpt", moa::mlp::train(model, train_set, tc).model);

        // Record fixtures for every templated tool input by running the agent live
        // against the synthetic services.
        auto services = std::make_shared<SyntheticServices>();
        auto ctx = std::make_shared<moa::tools::ToolContext>();
        ctx->offline = false;
        ctx->transport = services;
        ctx->fixtures = std::make_shared<moa::tools::FixtureStore>(out / "fixtures");
        ctx->record_fixtures = true;
        moa::tools::ToolRegistry registry;
        registry.add(std::make_shared<moa::tools::PubMedTool>(ctx));
        registry.add(std::make_shared<moa::tools::OncoKbTool>(ctx, "demo-token"));
        registry.add(std::make_shared<moa::tools::WebSearchTool>(
            ctx, std::make_shared<moa::tools::CustomSearchProvider>("demo-key", "demo-engine")));

        moa::HashedEmbedder embedder;
        const auto index = moa::kb::build_from_corpus(moa::kb::load_corpus(out / "corpus"), moa::kb::default_keywords(),
                                                      embedder);
        moa::agent::AgentConfig agent_config;
        agent_config.histology_enabled = false;
        auto manifest = moa::load_cohort(out / "cases.jsonl");
        const auto transcripts = moa::agent::generate_reports(manifest, agent_config, registry, index, embedder,
                                                              moa::agent::MockBackend{}, {{}, 1});
        std::size_t failed = 0;
        for (const auto& t : transcripts) {
            for (const auto& r : t.rounds) failed += r.result.status != moa::tools::ToolStatus::ok;
        }
        if (failed) throw moa::Error(std::to_string(failed) + " tool calls failed while recording fixtures");

        const json config = {
            {"seed", 7},
            {"offline", true},
            {"paths",
             {{"cases", "cases.jsonl"},
              {"corpus", "corpus"},
              {"fixtures", "fixtures"},
              {"output_dir", "out"},
              {"histology_model", "models/histology.ckpt"}}},
            {"agent", {{"histology_enabled", false}, {"workers", 1}}},
            {"embedder", {{"kind", "hashed"}, {"dimension", 768}}},
            {"train",
             {{"learning_rate", 1e-4}, {"weight_decay", 1e-5}, {"batch_size", 32}, {"epochs", 100}, {"class_weights", "auto"}}},
            {"experiment", {{"n_folds", 5}, {"hidden_dims", {64, 32, 16}}, {"workers", 1}}},
        };
        moa::io::write_file(out / "demo.cfg", config.dump(2) + "\n");
        std::cout << json{{"cases", cases.size()}, {"mutant", n_mutant}, {"out", out.string()}}.dump() << "\n";
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
