#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "moa/classifier.hpp"
#include "moa/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace moa;
using namespace moa::mlp;

TEST_CASE("softmax of logits [2, 2 + ln 3] gives mutant probability 0.75") {
    const auto p = softmax(2.0, 2.0 + std::log(3.0));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
}

TEST_CASE("inverse-frequency weights for 374 mutant / 114 wildtype") {
    const auto w = inverse_frequency_weights({114, 374});
    CHECK(w[1] == doctest::Approx(0.6524).epsilon(1e-4));
    CHECK(w[0] == doctest::Approx(2.1404).epsilon(1e-4));
    CHECK_THROWS_AS(inverse_frequency_weights({0, 10}), PreconditionError);
}

TEST_CASE("analytic gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CAPTURE(seed);
        CHECK(max_gradient_error(seed) < 1e-4);
    }
}

TEST_CASE("forward rejects wrong input width") {
    const auto m = init_model(4, {3, 3, 3}, 1);
    CHECK_THROWS_AS(forward(m, Matrix::Zero(2, 5), nullptr), DimensionError);
}

TEST_CASE("initialization is seeded and He-scaled") {
    const auto a = init_model(400, {300, 20, 10}, 9);
    const auto b = init_model(400, {300, 20, 10}, 9);
    CHECK(a == b);
    CHECK_FALSE(a == init_model(400, {300, 20, 10}, 10));
    const auto& w = a.weights[0];
    const double var = w.array().square().mean();
    CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.05));
    CHECK(a.biases[0].isZero());
    CHECK(a.parameter_count() == 400 * 300 + 300 + 300 * 20 + 20 + 20 * 10 + 10 + 10 * 2 + 2);
}

TEST_CASE("weighted loss with uniform weights equals the plain mean") {
    Matrix logits(2, 2);
    logits << 0.0, 1.0, 2.0, -1.0;
    const auto r = weighted_ce_loss(logits, {1, 0}, {1.0, 1.0});
    const double expected = 0.5 * (std::log(1 + std::exp(-1.0)) + std::log(1 + std::exp(-3.0)));
    CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("MLP separates 2-d linearly separable data") {
    CHECK(separable_holdout_accuracy(3) >= 0.95);
}

TEST_CASE("training is deterministic for a seed and reduces the loss") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 64; ++i) {
        const int y = i % 3 == 0 ? 0 : 1;
        rows.push_back({nd(rng) + (y ? 1.5 : -1.5), nd(rng), nd(rng)});
        labels.push_back(y);
    }
    Dataset d{to_matrix(rows), labels};
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.learning_rate = 1e-3;
    cfg.seed = 11;
    const auto a = train(init_model(3, {8, 8, 4}, 11), d, cfg);
    const auto b = train(init_model(3, {8, 8, 4}, 11), d, cfg);
    CHECK(a.model == b.model);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    cfg.decoupled_weight_decay = true;
    const auto c = train(init_model(3, {8, 8, 4}, 11), d, cfg);
    CHECK_FALSE(c.model == a.model);
}

TEST_CASE("adam step on a quadratic matches the closed-form first update") {
    auto m = init_model(1, {1, 1, 1}, 1);
    auto g = Gradients::zeros_like(m);
    g.weights[0](0, 0) = 0.3;
    const double before = m.weights[0](0, 0);
    auto state = AdamState::for_model(m);
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.learning_rate = 0.01;
    adam_step(m, g, state, cfg);
    // First Adam step moves by lr * g / (|g| + eps) = lr * sign(g).
    CHECK(m.weights[0](0, 0) == doctest::Approx(before - 0.01).epsilon(1e-6));
    CHECK(m.weights[1] == init_model(1, {1, 1, 1}, 1).weights[1]);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    const auto dir = scratch_dir("checkpoint");
    auto m = init_model(5, {4, 3, 2}, 17);
    m.biases[2](1) = 0.1 + 0.2;
    save_checkpoint(dir / "m.ckpt", m);
    CHECK(load_checkpoint(dir / "m.ckpt") == m);
    std::ofstream(dir / "bad.ckpt") << "{\"format\":\"other\"}";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.class_weights = ClassWeights{1.0, -1.0};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
