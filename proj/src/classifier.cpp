#include "moa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "moa/errors.hpp"
#include "moa/io.hpp"

namespace moa::mlp {

using nlohmann::json;

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < kWeightLayers; ++l) n += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
    return n;
}

void MlpModel::validate() const {
    if (layer_dims.back() != kOutputDim) throw ValidationError("MLP output dimension must be 2");
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        if (layer_dims[l] == 0) throw ValidationError("MLP layer widths must be positive");
        if (static_cast<std::size_t>(weights[l].rows()) != layer_dims[l + 1] ||
            static_cast<std::size_t>(weights[l].cols()) != layer_dims[l] ||
            static_cast<std::size_t>(biases[l].size()) != layer_dims[l + 1]) {
            throw ValidationError("MLP layer " + std::to_string(l) + " shape disagrees with layer_dims");
        }
        if (!weights[l].allFinite() || !biases[l].allFinite()) {
            throw ValidationError("MLP layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
}

bool MlpModel::operator==(const MlpModel& other) const {
    if (layer_dims != other.layer_dims || seed != other.seed) return false;
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
    }
    return true;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        g.weights[l] = Matrix::Zero(model.weights[l].rows(), model.weights[l].cols());
        g.biases[l] = Vector::Zero(model.biases[l].size());
    }
    return g;
}

MlpModel init_model(std::size_t input_dim, const std::array<std::size_t, 3>& hidden_dims,
                    std::uint64_t seed) {
    if (input_dim == 0) throw PreconditionError("init_model: input_dim must be >= 1");
    for (auto h : hidden_dims) {
        if (h == 0) throw PreconditionError("init_model: hidden widths must be >= 1");
    }
    MlpModel model;
    model.layer_dims = {input_dim, hidden_dims[0], hidden_dims[1], hidden_dims[2], kOutputDim};
    model.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        const auto fan_in = model.layer_dims[l];
        const auto fan_out = model.layer_dims[l + 1];
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        model.weights[l].resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
        for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < model.weights[l].cols(); ++c) model.weights[l](r, c) = dist(rng);
        }
        model.biases[l] = Vector::Zero(static_cast<Eigen::Index>(fan_out));
    }
    return model;
}

Matrix forward(const MlpModel& model, const Matrix& batch, ForwardCache* cache) {
    if (static_cast<std::size_t>(batch.cols()) != model.input_dim()) {
        throw DimensionError("forward: input has dimension " + std::to_string(batch.cols()) +
                             ", model expects " + std::to_string(model.input_dim()));
    }
    Matrix activation = batch;
    if (cache) cache->activations[0] = activation;
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        Matrix z = activation * model.weights[l].transpose();
        z.rowwise() += model.biases[l].transpose();
        if (l + 1 < kWeightLayers) z = z.cwiseMax(0.0);
        activation = std::move(z);
        if (cache) cache->activations[l + 1] = activation;
    }
    return activation;
}

std::array<double, kOutputDim> softmax(double logit0, double logit1) {
    const double m = std::max(logit0, logit1);
    const double e0 = std::exp(logit0 - m);
    const double e1 = std::exp(logit1 - m);
    const double total = e0 + e1;
    return {e0 / total, e1 / total};
}

LossResult weighted_ce_loss(const Matrix& logits, const std::vector<int>& labels,
                            const ClassWeights& class_weights) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size() ||
        static_cast<std::size_t>(logits.cols()) != kOutputDim) {
        throw DimensionError("weighted_ce_loss: logits/labels shape mismatch");
    }
    if (labels.empty()) throw PreconditionError("weighted_ce_loss: empty batch");
    for (double w : class_weights) {
        if (!(w > 0.0)) throw PreconditionError("weighted_ce_loss: class weights must be positive");
    }
    if (!logits.allFinite()) throw PreconditionError("weighted_ce_loss: non-finite logits");

    LossResult out;
    out.grad_logits = Matrix::Zero(logits.rows(), logits.cols());
    double weight_sum = 0.0;
    double weighted_nll = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y != 0 && y != 1) throw PreconditionError("weighted_ce_loss: labels must be 0 or 1");
        const auto row = static_cast<Eigen::Index>(i);
        const double z0 = logits(row, 0);
        const double z1 = logits(row, 1);
        const double m = std::max(z0, z1);
        const double log_sum = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
        const double w = class_weights[static_cast<std::size_t>(y)];
        weighted_nll += w * (log_sum - logits(row, y));
        weight_sum += w;
        const auto p = softmax(z0, z1);
        out.grad_logits(row, 0) = w * (p[0] - (y == 0 ? 1.0 : 0.0));
        out.grad_logits(row, 1) = w * (p[1] - (y == 1 ? 1.0 : 0.0));
    }
    out.loss = weighted_nll / weight_sum;
    out.grad_logits /= weight_sum;
    return out;
}

ClassWeights inverse_frequency_weights(const std::array<std::size_t, kOutputDim>& counts) {
    const double total = static_cast<double>(counts[0] + counts[1]);
    ClassWeights w{};
    for (std::size_t c = 0; c < kOutputDim; ++c) {
        if (counts[c] == 0) {
            throw PreconditionError("inverse-frequency weights need at least one sample per class");
        }
        w[c] = total / (static_cast<double>(kOutputDim) * static_cast<double>(counts[c]));
    }
    return w;
}

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& grad_logits) {
    Gradients g;
    Matrix delta = grad_logits;
    for (std::size_t step = 0; step < kWeightLayers; ++step) {
        const std::size_t l = kWeightLayers - 1 - step;
        const Matrix& input = cache.activations[l];
        g.weights[l] = delta.transpose() * input;
        g.biases[l] = delta.colwise().sum().transpose();
        if (l == 0) break;
        Matrix upstream = delta * model.weights[l];
        // ReLU derivative: the cached post-activation is positive exactly where z > 0.
        delta = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
    return g;
}

std::pair<double, Gradients> loss_and_gradients(const MlpModel& model, const Matrix& batch,
                                                const std::vector<int>& labels,
                                                const ClassWeights& class_weights) {
    ForwardCache cache;
    const Matrix logits = forward(model, batch, &cache);
    auto loss = weighted_ce_loss(logits, labels, class_weights);
    return {loss.loss, backward(model, cache, loss.grad_logits)};
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (class_weights) {
        for (double w : *class_weights) {
            if (!(w > 0.0)) throw ValidationError("class weights must be positive");
        }
    }
}

AdamState AdamState::for_model(const MlpModel& model) {
    return {0, Gradients::zeros_like(model), Gradients::zeros_like(model)};
}

namespace {

template <typename Param>
void adam_update(Param& param, const Param& grad, Param& m, Param& v, const TrainConfig& config,
                 double bias1, double bias2) {
    auto g = grad.array();
    auto p = param.array();
    if (!config.decoupled_weight_decay && config.weight_decay != 0.0) {
        const Param coupled = (g + config.weight_decay * p).matrix();
        m.array() = config.beta1 * m.array() + (1.0 - config.beta1) * coupled.array();
        v.array() = config.beta2 * v.array() + (1.0 - config.beta2) * coupled.array().square();
    } else {
        m.array() = config.beta1 * m.array() + (1.0 - config.beta1) * g;
        v.array() = config.beta2 * v.array() + (1.0 - config.beta2) * g.square();
    }
    if (config.decoupled_weight_decay && config.weight_decay != 0.0) {
        param.array() *= (1.0 - config.learning_rate * config.weight_decay);
    }
    param.array() -= config.learning_rate * (m.array() / bias1) /
                     ((v.array() / bias2).sqrt() + config.adam_epsilon);
}

}  // namespace

void adam_step(MlpModel& model, const Gradients& gradients, AdamState& state, const TrainConfig& config) {
    ++state.step;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        if (gradients.weights[l].rows() != model.weights[l].rows() ||
            gradients.weights[l].cols() != model.weights[l].cols() ||
            state.first_moment.weights[l].rows() != model.weights[l].rows()) {
            throw DimensionError("adam_step: gradient/state shape does not match the model");
        }
        adam_update(model.weights[l], gradients.weights[l], state.first_moment.weights[l],
                    state.second_moment.weights[l], config, bias1, bias2);
        adam_update(model.biases[l], gradients.biases[l], state.first_moment.biases[l],
                    state.second_moment.biases[l], config, bias1, bias2);
    }
}

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    const std::size_t n = data.labels.size();
    if (n == 0 || static_cast<std::size_t>(data.features.rows()) != n) {
        throw PreconditionError("train: features and labels must be non-empty and aligned");
    }
    if (static_cast<std::size_t>(data.features.cols()) != model.input_dim()) {
        throw DimensionError("train: feature dimension " + std::to_string(data.features.cols()) +
                             " does not match model input " + std::to_string(model.input_dim()));
    }
    ClassWeights weights{};
    if (config.class_weights) {
        weights = *config.class_weights;
    } else {
        std::array<std::size_t, kOutputDim> counts{};
        for (int y : data.labels) {
            if (y != 0 && y != 1) throw PreconditionError("train: labels must be 0 or 1");
            ++counts[static_cast<std::size_t>(y)];
        }
        if (counts[0] == 0 || counts[1] == 0) {
            throw PreconditionError("train: automatic class weights need both classes present");
        }
        weights = inverse_frequency_weights(counts);
    }

    AdamState state = AdamState::for_model(model);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.epoch_loss.reserve(config.epochs);
    Matrix batch;
    std::vector<int> batch_labels;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            batch.resize(static_cast<Eigen::Index>(stop - start), data.features.cols());
            batch_labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.row(static_cast<Eigen::Index>(i - start)) =
                    data.features.row(static_cast<Eigen::Index>(order[i]));
                batch_labels.push_back(data.labels[order[i]]);
            }
            auto [loss, grads] = loss_and_gradients(model, batch, batch_labels, weights);
            adam_step(model, grads, state, config);
            loss_sum += loss;
            ++batches;
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    result.model = std::move(model);
    return result;
}

double predict_proba(const MlpModel& model, const std::vector<double>& features) {
    Matrix row(1, static_cast<Eigen::Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = features[j];
    return predict_proba(model, row).front();
}

std::vector<double> predict_proba(const MlpModel& model, const Matrix& batch) {
    const Matrix logits = forward(model, batch);
    std::vector<double> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = softmax(logits(i, 0), logits(i, 1))[1];
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model) {
    model.validate();
    json layers = json::array();
    for (std::size_t l = 0; l < kWeightLayers; ++l) {
        const auto& w = model.weights[l];
        layers.push_back({{"weights", std::vector<double>(w.data(), w.data() + w.size())},
                          {"bias", std::vector<double>(model.biases[l].data(),
                                                       model.biases[l].data() + model.biases[l].size())}});
    }
    json doc = {{"format", "moa-mlp-v1"},
                {"activation", "relu"},
                {"layer_dims", model.layer_dims},
                {"seed", model.seed},
                {"layers", std::move(layers)}};
    io::write_file(path, doc.dump() + "\n");
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
    try {
        const json doc = json::parse(io::read_file(path));
        if (doc.value("format", "") != "moa-mlp-v1") throw ParseError("not an MLP checkpoint");
        if (doc.value("activation", "") != "relu") throw ParseError("unsupported activation");
        MlpModel model;
        const auto dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
        if (dims.size() != kWeightLayers + 1) throw ParseError("checkpoint must describe four layers");
        std::copy(dims.begin(), dims.end(), model.layer_dims.begin());
        model.seed = doc.at("seed").get<std::uint64_t>();
        const auto& layers = doc.at("layers");
        if (layers.size() != kWeightLayers) throw ParseError("checkpoint must hold four layers");
        for (std::size_t l = 0; l < kWeightLayers; ++l) {
            const auto w = layers[l].at("weights").get<std::vector<double>>();
            const auto b = layers[l].at("bias").get<std::vector<double>>();
            const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
            const auto cols = static_cast<Eigen::Index>(dims[l]);
            if (w.size() != dims[l + 1] * dims[l] || b.size() != dims[l + 1]) {
                throw ParseError("layer " + std::to_string(l) + " parameter count mismatch");
            }
            model.weights[l] = Eigen::Map<const Matrix>(w.data(), rows, cols);
            model.biases[l] = Eigen::Map<const Vector>(b.data(), rows);
        }
        model.validate();
        return model;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw DimensionError("to_matrix: ragged rows");
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

}  // namespace moa::mlp
