#include <doctest.h>

#include <atomic>
#include <cmath>

#include "moa/errors.hpp"
#include "moa/text_embedder.hpp"
#include <json.hpp>

using namespace moa;
using nlohmann::json;

namespace {

double norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Answers each POST with a vector derived from the text length.
class FakeEmbeddingServer final : public http::Transport {
public:
    explicit FakeEmbeddingServer(std::size_t dim, int fail_first = 0) : dim_(dim), fail_(fail_first) {}
    http::Response send(const http::Request& request) override {
        ++calls;
        if (fail_ > 0) {
            --fail_;
            throw TransportError("connection reset");
        }
        const auto body = json::parse(request.body);
        json vectors = json::array();
        for (const auto& t : body.at("texts")) {
            std::vector<double> v(dim_, 0.0);
            v[t.get<std::string>().size() % dim_] = 1.0;
            vectors.push_back(v);
        }
        return {200, json{{"vectors", vectors}}.dump()};
    }
    std::atomic<int> calls{0};

private:
    std::size_t dim_;
    int fail_;
};

}  // namespace

TEST_CASE("hashed embedder is deterministic and unit norm") {
    HashedEmbedder emb;
    const auto a = emb.embed_one("IDH1 R132H mutation in oligodendroglioma");
    CHECK(a == emb.embed_one("IDH1 R132H mutation in oligodendroglioma"));
    CHECK(a.size() == 768);
    CHECK(std::abs(norm(a) - 1.0) < 1e-12);
    for (const char* t : {"x", "a b c d e f g", "!!! only ??? punctuation 42"}) {
        CHECK(std::abs(norm(emb.embed_one(t)) - 1.0) < 1e-12);
    }
    CHECK(emb.embed_one("IDH1 Mutation") == emb.embed_one("idh1, mutation!"));
}

TEST_CASE("shared tokens give higher cosine than disjoint tokens") {
    HashedEmbedder emb;
    const auto base = emb.embed_one("glioma with idh1 mutation and 1p19q codeletion");
    const auto near = emb.embed_one("glioma with idh1 mutation and atrx loss");
    const auto far = emb.embed_one("breast carcinoma her2 amplified tumour");
    CHECK(cosine_similarity(base, near) > cosine_similarity(base, far));
    CHECK(cosine_similarity(base, base) == doctest::Approx(1.0));
}

TEST_CASE("embed_batch equals single calls and preserves order") {
    HashedEmbedder emb(64);
    const std::vector<std::pair<std::string, std::string>> items = {
        {"a", "first report"}, {"b", "second report text"}, {"c", "third"}};
    const auto batch = embed_batch(emb, items, Modality::clinical_text, 2);
    REQUIRE(batch.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto single = embed_text(emb, items[i].first, items[i].second, Modality::clinical_text);
        CHECK(batch[i] == single);
    }
    CHECK(embed_batch(emb, {}).empty());
}

TEST_CASE("empty text fails and names the id") {
    HashedEmbedder emb;
    try {
        embed_batch(emb, {{"ok", "text"}, {"blank-one", "   "}});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("blank-one") != std::string::npos);
    }
    CHECK_THROWS_AS(embed_text(emb, "z", ""), PreconditionError);
}

TEST_CASE("truncation keeps a non-empty head") {
    bool truncated = false;
    CHECK(truncate_tokens("a b  c d", 2, &truncated) == "a b");
    CHECK(truncated);
    CHECK(truncate_tokens("a b", 5, &truncated) == "a b");
    CHECK_FALSE(truncated);
    CHECK_FALSE(truncate_tokens("   word", 1).empty());

    HashedEmbedder small(32, 3);
    CHECK(small.embed_one("one two three four five") == small.embed_one("one two three"));
}

TEST_CASE("embedder config validation") {
    EmbedderConfig c;
    c.kind = EmbedderKind::remote;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.endpoint = "http://localhost:1/embed";
    c.validate();
    c.dimension = 4;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK(parse_embedder_kind("hashed") == EmbedderKind::hashed);
}

TEST_CASE("remote embedder batches, retries and checks dimension") {
    EmbedderConfig c;
    c.kind = EmbedderKind::remote;
    c.endpoint = "http://embed.local/v1";
    c.dimension = 8;
    c.retry.initial_backoff = std::chrono::milliseconds(1);
    auto server = std::make_shared<FakeEmbeddingServer>(8, 1);
    auto emb = make_embedder(c, server);
    CHECK(emb->id() == "remote:http://embed.local/v1");

    std::vector<std::pair<std::string, std::string>> items;
    for (int i = 0; i < 5; ++i) items.emplace_back("p" + std::to_string(i), std::string(i + 1, 'x'));
    const auto out = embed_batch(*emb, items, Modality::report, 2, 2);
    REQUIRE(out.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(out[i].id == items[i].first);
        CHECK(out[i].vector[(i + 1) % 8] == 1.0);
    }
    CHECK(server->calls == 4);  // 3 batches plus one retried failure

    auto wrong = std::make_shared<FakeEmbeddingServer>(16);
    auto bad = make_embedder(c, wrong);
    CHECK_THROWS_AS(bad->embed_texts({"hello"}), DimensionError);
}

TEST_CASE("remote embedder gives up after retries") {
    EmbedderConfig c;
    c.kind = EmbedderKind::remote;
    c.endpoint = "http://embed.local/v1";
    c.dimension = 8;
    c.retry.max_attempts = 2;
    c.retry.initial_backoff = std::chrono::milliseconds(1);
    auto server = std::make_shared<FakeEmbeddingServer>(8, 10);
    auto emb = make_embedder(c, server);
    CHECK_THROWS(embed_batch(*emb, {{"q", "text"}}));
    CHECK(server->calls == 2);

    auto guarded = make_embedder(c, std::make_shared<http::OfflineGuard>());
    CHECK_THROWS_AS(guarded->embed_texts({"text"}), OfflineViolation);
}
