#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "moa/embedding.hpp"
#include "moa/errors.hpp"
#include "support.hpp"

using namespace moa;

namespace {

Embedding e1(const std::string& id, double v) { return {id, {v}, Modality::report}; }

}  // namespace

TEST_CASE("population std of 1,2,3") {
    const auto stats = fit_normalizer({e1("a", 1), e1("b", 2), e1("c", 3)});
    CHECK(stats.mean[0] == doctest::Approx(2.0));
    CHECK(stats.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(std::abs(stats.stddev[0] - 0.8165) < 5e-5);
    CHECK(stats.fitted_on == std::set<std::string>{"a", "b", "c"});

    const auto z = apply_normalizer(stats, e1("x", 3));
    CHECK(std::abs(z.vector[0] - 1.2247) < 5e-5);
    CHECK(apply_normalizer(stats, e1("m", 2)).vector[0] == 0.0);
}

TEST_CASE("single embedding has zero std and degenerate columns stay finite") {
    const auto stats = fit_normalizer({Embedding{"a", {4, 5}, Modality::slide}});
    CHECK(stats.stddev == std::vector<double>{0, 0});
    const auto z = apply_normalizer(stats, Embedding{"b", {4.5, 5}, Modality::slide});
    CHECK(std::isfinite(z.vector[0]));
    CHECK(z.vector[0] == doctest::Approx(0.5 / kStdEpsilon));
    CHECK(z.vector[1] == 0.0);
    CHECK(z.modality == Modality::slide);
}

TEST_CASE("dimension mismatches are rejected") {
    CHECK_THROWS_AS(fit_normalizer({Embedding{"a", {1, 2}}, Embedding{"b", {1, 2, 3}}}), DimensionError);
    CHECK_THROWS(fit_normalizer({}));
    const auto stats = fit_normalizer({Embedding{"a", {1, 2}}});
    CHECK_THROWS_AS(apply_normalizer(stats, Embedding{"b", {1, 2, 3}}), DimensionError);
}

TEST_CASE("fuse_concat") {
    const auto f = fuse_concat(e1("p", 5), e1("p", 7));
    CHECK(f.vector == std::vector<double>{5, 7});
    CHECK(f.modality == Modality::fused);
    CHECK_THROWS_AS(fuse_concat(e1("A", 1), e1("B", 2)), ValidationError);

    Embedding report{"p", std::vector<double>(768, 0.1), Modality::report};
    Embedding slide{"p", std::vector<double>(768, 0.2), Modality::slide};
    CHECK(fuse_concat(report, slide).dim() == 1536);

    // Associative up to flattening, order preserved.
    Embedding a{"p", {1, 2}}, b{"p", {3}}, c{"p", {4, 5}};
    CHECK(fuse_concat(fuse_concat(a, b), c).vector == fuse_concat(a, fuse_concat(b, c)).vector);
    CHECK(fuse_concat(fuse_concat(a, b), c).vector == std::vector<double>{1, 2, 3, 4, 5});
}

TEST_CASE("training fold normalizes to zero mean and unit std") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(3.0, 7.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng() % 60, d = 1 + rng() % 20;
        std::vector<Embedding> xs;
        for (std::size_t i = 0; i < n; ++i) {
            Embedding e{"id" + std::to_string(i), {}, Modality::report};
            for (std::size_t j = 0; j < d; ++j) e.vector.push_back(j == 0 ? 1.5 : g(rng));
            xs.push_back(e);
        }
        const auto stats = fit_normalizer(xs);
        for (std::size_t j = 1; j < d; ++j) {
            double mean = 0, sq = 0;
            for (const auto& e : xs) mean += apply_normalizer(stats, e).vector[j];
            mean /= n;
            for (const auto& e : xs) sq += std::pow(apply_normalizer(stats, e).vector[j] - mean, 2);
            CHECK(std::abs(mean) < 1e-9);
            CHECK(std::abs(std::sqrt(sq / n) - 1.0) < 1e-9);
        }
        CHECK(stats.stddev[0] == 0.0);
    }
}

TEST_CASE("embedding files round-trip bit-identically") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    std::vector<Embedding> xs;
    for (int i = 0; i < 3; ++i) {
        Embedding e{"e" + std::to_string(i), {}, i == 0 ? Modality::fused : Modality::clinical_text};
        for (int j = 0; j < 50; ++j) e.vector.push_back(u(rng) / 3.0);
        e.vector.push_back(5e-320);
        xs.push_back(e);
    }
    const auto dir = scratch_dir("embeddings");
    save_embeddings(dir / "x.jsonl", xs);
    CHECK(load_embeddings(dir / "x.jsonl") == xs);

    { std::ofstream(dir / "empty.jsonl"); }
    CHECK(load_embeddings(dir / "empty.jsonl").empty());

    {
        std::ofstream out(dir / "nan.jsonl");
        out << R"({"id":"a","modality":"report","vector":[1.0]})" << "\n";
        out << R"({"id":"b","modality":"report","vector":[NaN]})" << "\n";
    }
    try {
        load_embeddings(dir / "nan.jsonl");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("normalization stats persist") {
    const auto stats = fit_normalizer({Embedding{"a", {1, 2}}, Embedding{"b", {0.1, -7}}});
    const auto dir = scratch_dir("stats");
    save_stats(dir / "s.json", stats);
    const auto back = load_stats(dir / "s.json");
    CHECK(back.mean == stats.mean);
    CHECK(back.stddev == stats.stddev);
    CHECK(back.fitted_on == stats.fitted_on);
}

TEST_CASE("modality names") {
    for (auto m : {Modality::report, Modality::clinical_text, Modality::one_hot, Modality::slide, Modality::fused}) {
        CHECK(parse_modality(to_string(m)) == m);
    }
    CHECK_THROWS(parse_modality("audio"));
}
