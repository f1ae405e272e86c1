#include <doctest.h>

#include <fstream>
#include <random>

#include "moa/errors.hpp"
#include "moa/tools.hpp"
#include "support.hpp"
// After Eigen: resolv.h defines _res.
#include "local_services.hpp"

using namespace moa;
using namespace moa::tools;
using nlohmann::json;

namespace {

std::shared_ptr<const ToolContext> demo_replay() {
    return std::make_shared<ToolContext>(
        ToolContext::offline_replay(std::make_shared<FixtureStore>(demo_dir() / "fixtures")));
}

std::shared_ptr<ToolContext> recording_context(const std::filesystem::path& root) {
    auto ctx = std::make_shared<ToolContext>();
    ctx->offline = false;
    ctx->transport = std::make_shared<http::LiveTransport>(std::chrono::seconds(5));
    ctx->fixtures = std::make_shared<FixtureStore>(root);
    ctx->record_fixtures = true;
    ctx->retry.initial_backoff = std::chrono::milliseconds(1);
    return ctx;
}

std::filesystem::path write_features(const std::filesystem::path& path, const std::vector<double>& v) {
    std::ofstream out(path);
    for (std::size_t i = 0; i < v.size(); ++i) out << v[i] << (i % 16 == 15 ? '\n' : ' ');
    return path;
}

class CountingTransport final : public http::Transport {
public:
    explicit CountingTransport(int failures) : failures_(failures) {}
    http::Response send(const http::Request&) override {
        ++calls;
        if (failures_-- > 0) throw TransportError("timeout");
        return {200, "ok"};
    }
    int calls = 0;

private:
    int failures_;
};

}  // namespace

TEST_CASE("fixture replay of literature and annotation tools") {
    auto ctx = demo_replay();
    PubMedTool pubmed(ctx);
    const auto r = pubmed.search("IDH1 low-grade glioma", 3);
    REQUIRE(r.status == ToolStatus::ok);
    CHECK(r.citations.size() == 3);
    for (const auto& c : r.citations) CHECK(c.rfind("PMID:", 0) == 0);
    r.check_invariants();

    OncoKbTool oncokb(ctx, "");
    const auto a = oncokb.annotate("tp53", "R273H");
    REQUIRE(a.status == ToolStatus::ok);
    CHECK(to_gene_annotation(a).oncogenicity == Oncogenicity::oncogenic);
    CHECK(to_gene_annotation(a).gene_symbol == "TP53");

    WebSearchTool web(ctx, nullptr);
    const auto w = web.search("IDH1 mutation low-grade glioma", 3);
    CHECK(w.status == ToolStatus::ok);
    CHECK_FALSE(w.citations.empty());
    CHECK(w.citations.size() <= 3);
}

TEST_CASE("tool preconditions and boundaries") {
    auto ctx = demo_replay();
    PubMedTool pubmed(ctx);
    CHECK_THROWS_AS(pubmed.search("", 3), PreconditionError);
    CHECK_THROWS_AS(pubmed.search("   ", 3), PreconditionError);
    const auto none = pubmed.search("anything", 0);
    CHECK(none.status == ToolStatus::ok);
    CHECK(none.citations.empty());
    CHECK_FALSE(none.payload.empty());

    OncoKbTool oncokb(ctx, "");
    CHECK_THROWS_AS(oncokb.annotate("", "R273H"), PreconditionError);
    CHECK_THROWS_AS(oncokb.invoke(json::object()), Error);
}

TEST_CASE("offline fixture miss names the cache key and never touches the network") {
    auto ctx = demo_replay();
    PubMedTool pubmed(ctx);
    const auto r = pubmed.search("a term nobody recorded", 3);
    CHECK(r.status == ToolStatus::error);
    const auto key = FixtureStore::cache_key(kPubMed, json{{"term", "a term nobody recorded"}, {"max_results", 3}});
    CHECK(r.reason.find(key) != std::string::npos);
    r.check_invariants();
}

TEST_CASE("cache keys are stable and input-sensitive") {
    const json a = {{"term", "x"}, {"max_results", 3}};
    const json b = {{"max_results", 3}, {"term", "x"}};
    CHECK(FixtureStore::cache_key(kPubMed, a) == FixtureStore::cache_key(kPubMed, b));
    CHECK(FixtureStore::cache_key(kPubMed, a) != FixtureStore::cache_key(kWebSearch, a));
    CHECK(FixtureStore::cache_key(kPubMed, a) != FixtureStore::cache_key(kPubMed, json{{"term", "y"}, {"max_results", 3}}));
}

TEST_CASE("live clients record fixtures that replay byte-identically") {
    LocalServices services;
    const auto dir = scratch_dir("tool_record");
    auto live = recording_context(dir);
    PubMedTool pubmed(live, services.origin() + "/eutils");
    OncoKbTool oncokb(live, "good-token", services.origin() + "/oncokb");
    WebSearchTool web(live, std::make_shared<CustomSearchProvider>("secret-key", "engine", services.origin() + "/search"));

    const auto p = pubmed.search("IDH1 low-grade glioma", 3);
    const auto k = oncokb.annotate("TP53", "R273H");
    const auto f = oncokb.annotate("FAKE1", "X1Y");
    const auto s = web.search("IDH1 glioma", 2);
    const auto empty = pubmed.search("nothing matches", 3);
    REQUIRE(p.status == ToolStatus::ok);
    REQUIRE(k.status == ToolStatus::ok);
    REQUIRE(f.status == ToolStatus::ok);
    REQUIRE(s.status == ToolStatus::ok);
    CHECK(p.citations == std::vector<std::string>{"PMID:100001", "PMID:100002", "PMID:100003"});
    CHECK(p.payload.find("IDH1 & glioma study 100001") != std::string::npos);
    CHECK(to_gene_annotation(k).oncogenicity == Oncogenicity::oncogenic);
    CHECK(to_gene_annotation(f).oncogenicity == Oncogenicity::unknown);
    CHECK(s.citations.size() == 2);
    CHECK(empty.status == ToolStatus::ok);
    CHECK(empty.citations.empty());
    const int live_hits = services.hits;
    CHECK(live_hits == 6);  // no efetch when esearch is empty

    // Credentials never reach the fixture files.
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path());
        const std::string text((std::istreambuf_iterator<char>(in)), {});
        CHECK(text.find("secret-key") == std::string::npos);
        CHECK(text.find("good-token") == std::string::npos);
    }

    auto replay = std::make_shared<ToolContext>(ToolContext::offline_replay(std::make_shared<FixtureStore>(dir)));
    PubMedTool pubmed2(replay, services.origin() + "/eutils");
    OncoKbTool oncokb2(replay, "", services.origin() + "/oncokb");
    WebSearchTool web2(replay, std::make_shared<CustomSearchProvider>("", "", services.origin() + "/search"));
    CHECK(pubmed2.search("IDH1 low-grade glioma", 3).to_json().dump() == p.to_json().dump());
    CHECK(oncokb2.annotate("TP53", "R273H").to_json().dump() == k.to_json().dump());
    CHECK(oncokb2.annotate("fake1", "X1Y").to_json().dump() == f.to_json().dump());
    CHECK(web2.search("IDH1 glioma", 2).to_json().dump() == s.to_json().dump());
    CHECK(services.hits == live_hits);
}

TEST_CASE("auth failure and missing token are errors") {
    LocalServices services;
    auto live = recording_context(scratch_dir("tool_auth"));
    OncoKbTool wrong(live, "bad-token", services.origin() + "/oncokb");
    const auto r = wrong.annotate("TP53", "R273H");
    CHECK(r.status == ToolStatus::error);
    CHECK(r.reason.find("auth") != std::string::npos);
    OncoKbTool missing(live, "", services.origin() + "/oncokb");
    CHECK(missing.annotate("TP53", "R273H").status == ToolStatus::error);
}

TEST_CASE("unreachable service yields an error result carrying the retry count") {
    auto live = recording_context(scratch_dir("tool_unreachable"));
    live->retry.max_attempts = 2;
    live->transport = std::make_shared<http::LiveTransport>(std::chrono::milliseconds(300));
    PubMedTool pubmed(live, "http://127.0.0.1:1/eutils");
    const auto r = pubmed.search("IDH1", 3);
    CHECK(r.status == ToolStatus::error);
    CHECK(r.attempts == 2);
    CHECK(r.reason.find("2 attempts") != std::string::npos);
}

TEST_CASE("retry policy") {
    http::Request req;
    req.url = "http://x/y";
    http::RetryPolicy policy{3, std::chrono::milliseconds(1)};
    CountingTransport two_failures(2);
    const auto ok = http::send_with_retry(two_failures, req, policy);
    CHECK(ok.attempts == 3);
    CHECK(ok.response.status == 200);

    CountingTransport always(100);
    CHECK_THROWS_AS(http::send_with_retry(always, req, policy), TransportError);
    CHECK(always.calls == 3);

    http::OfflineGuard guard;
    CHECK_THROWS_AS(http::send_with_retry(guard, req, policy), OfflineViolation);
}

TEST_CASE("url helpers") {
    CHECK(http::url_encode("IDH1 R132H/a&b") == "IDH1%20R132H%2Fa%26b");
    CHECK(http::url_encode("abc-_.~") == "abc-_.~");
    const auto s = http::split_url("https://host:8443/a/b?c=d");
    CHECK(s.origin == "https://host:8443");
    CHECK(s.path == "/a/b?c=d");
}

TEST_CASE("web search without a provider is a documented no-op") {
    auto ctx = std::make_shared<ToolContext>();
    ctx->offline = false;
    ctx->transport = std::make_shared<http::OfflineGuard>();
    WebSearchTool web(ctx, std::make_shared<StubSearchProvider>());
    const auto r = web.search("IDH1", 3);
    CHECK(r.status == ToolStatus::ok);
    CHECK(r.payload.find("not configured") != std::string::npos);
}

TEST_CASE("tool results serialize and enforce invariants") {
    ToolResult r;
    r.tool_name = kPubMed;
    r.payload = "p";
    r.citations = {"PMID:1"};
    r.latency_ms = 12;
    r.data = {{"k", 1}};
    const auto back = ToolResult::from_json(r.to_json(true));
    CHECK(back.to_json(true) == r.to_json(true));
    CHECK_FALSE(r.to_json().contains("latency_ms"));

    ToolResult bad_ok;
    bad_ok.tool_name = kPubMed;
    CHECK_THROWS(bad_ok.check_invariants());
    ToolResult bad_skip;
    bad_skip.tool_name = kHistology;
    bad_skip.status = ToolStatus::skipped;
    CHECK_THROWS(bad_skip.check_invariants());
    CHECK_THROWS(parse_tool_status("maybe"));
}

TEST_CASE("registry lookup") {
    ToolRegistry reg;
    reg.add(std::make_shared<PubMedTool>(demo_replay()));
    CHECK(reg.contains(kPubMed));
    CHECK_FALSE(reg.contains(kOncoKb));
    CHECK_THROWS(reg.add(std::make_shared<PubMedTool>(demo_replay())));
    CHECK(reg.descriptors().size() == 1);
}

TEST_CASE("histology tool on a zero model resolves the tie to mutant") {
    auto model = mlp::init_model(kSlideFeatureDim, {8, 8, 8}, 1);
    for (auto& w : model.weights) w.setZero();
    for (auto& b : model.biases) b.setZero();
    HistologyTool tool(std::make_shared<mlp::MlpModel>(model));
    const auto dir = scratch_dir("histology_zero");
    const auto path = write_features(dir / "a.txt", std::vector<double>(768, 0.3));
    const auto r = tool.predict(path);
    REQUIRE(r.status == ToolStatus::ok);
    CHECK(r.data.at("probability").get<double>() == 0.5);
    CHECK(r.data.at("prediction") == "mutant");

    const auto short_file = write_features(dir / "b.txt", std::vector<double>(767, 0.3));
    const auto err = tool.predict(short_file);
    CHECK(err.status == ToolStatus::error);
    CHECK(err.reason.find("767") != std::string::npos);

    CHECK(tool.predict(dir / "missing.txt").status == ToolStatus::error);
    const auto skipped = tool.predict(dir / "slide.svs");
    CHECK(skipped.status == ToolStatus::skipped);
    CHECK(skipped.reason == "feature extraction not available");
    CHECK(is_slide_image("x.NDPI"));
    CHECK_FALSE(is_slide_image("x.txt"));

    CHECK_THROWS_AS(HistologyTool(std::make_shared<mlp::MlpModel>(mlp::init_model(10, {4, 4, 4}))), DimensionError);
}

TEST_CASE("histology tool agrees with the classifier on a trained model") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    auto sample = [&](int label) {
        std::vector<double> v(768);
        for (auto& x : v) x = g(rng);
        for (int j = 0; j < 8; ++j) v[j] += label ? 2.0 : -2.0;
        return v;
    };
    std::vector<std::vector<double>> rows;
    mlp::Dataset data;
    for (int i = 0; i < 120; ++i) {
        rows.push_back(sample(i % 2));
        data.labels.push_back(i % 2);
    }
    data.features = mlp::to_matrix(rows);
    mlp::TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 30;
    auto model = std::make_shared<mlp::MlpModel>(mlp::train(mlp::init_model(768, {32, 16, 8}, 3), data, cfg).model);
    HistologyTool tool(model);

    const auto dir = scratch_dir("histology_trained");
    const auto positive = sample(1);
    std::ofstream(dir / "p.jsonl") << json{{"id", "P"}, {"modality", "slide"}, {"vector", positive}}.dump() << "\n";
    const auto r = tool.invoke({{"feature_path", (dir / "p.jsonl").string()}});
    REQUIRE(r.status == ToolStatus::ok);
    const double p = r.data.at("probability").get<double>();
    CHECK(p > 0.5);
    CHECK(p == mlp::predict_proba(*model, positive));
    CHECK(load_slide_features(dir / "p.jsonl") == positive);
}
