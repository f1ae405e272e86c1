#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "moa/embedding.hpp"

namespace moa::mlp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kWeightLayers = 4;
inline constexpr std::size_t kOutputDim = 2;
inline const std::array<std::size_t, 3> kDefaultHiddenDims = {512, 256, 64};

/// Four affine layers (three ReLU hidden layers, two output logits).
/// Logit 1 is the mutant class, logit 0 wildtype.
struct MlpModel {
    std::array<std::size_t, kWeightLayers + 1> layer_dims{};
    std::array<Matrix, kWeightLayers> weights;  // [out x in]
    std::array<Vector, kWeightLayers> biases;
    std::uint64_t seed = 0;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t parameter_count() const;
    void validate() const;

    bool operator==(const MlpModel& other) const;
};

/// Per-parameter tensors shaped like the model.
struct Gradients {
    std::array<Matrix, kWeightLayers> weights;
    std::array<Vector, kWeightLayers> biases;

    static Gradients zeros_like(const MlpModel& model);
};

/// He-normal weights from a seeded mt19937_64, zero biases.
MlpModel init_model(std::size_t input_dim,
                    const std::array<std::size_t, 3>& hidden_dims = kDefaultHiddenDims,
                    std::uint64_t seed = 42);

/// Activations kept for backpropagation; activations[0] is the input batch.
struct ForwardCache {
    std::array<Matrix, kWeightLayers + 1> activations;
};

/// Rows of `batch` are samples; returns n x 2 logits.
Matrix forward(const MlpModel& model, const Matrix& batch, ForwardCache* cache = nullptr);

struct LossResult {
    double loss = 0.0;
    Matrix grad_logits;  // n x 2
};

/// Class weights indexed by class index (wildtype 0, mutant 1).
using ClassWeights = std::array<double, kOutputDim>;

/// Weighted mean cross-entropy: sum_i w[y_i] * -log softmax(z_i)[y_i] / sum_i w[y_i].
LossResult weighted_ce_loss(const Matrix& logits, const std::vector<int>& labels,
                            const ClassWeights& class_weights);

/// w_c = N / (K * N_c). Throws if a class is absent.
ClassWeights inverse_frequency_weights(const std::array<std::size_t, kOutputDim>& counts);

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& grad_logits);

/// Loss and parameter gradients for one batch (no weight decay term).
std::pair<double, Gradients> loss_and_gradients(const MlpModel& model, const Matrix& batch,
                                                const std::vector<int>& labels,
                                                const ClassWeights& class_weights);

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    /// nullopt: inverse frequency on the training set.
    std::optional<ClassWeights> class_weights;
    std::uint64_t seed = 0;
    /// false: L2 term added to the gradient (classic Adam); true: AdamW-style decay.
    bool decoupled_weight_decay = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

struct AdamState {
    std::uint64_t step = 0;
    Gradients first_moment;
    Gradients second_moment;

    static AdamState for_model(const MlpModel& model);
};

void adam_step(MlpModel& model, const Gradients& gradients, AdamState& state, const TrainConfig& config);

struct Dataset {
    Matrix features;  // n x d
    std::vector<int> labels;
};

struct TrainResult {
    MlpModel model;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& config);

/// Softmax over the two logits; returns P(mutant).
double predict_proba(const MlpModel& model, const std::vector<double>& features);
std::vector<double> predict_proba(const MlpModel& model, const Matrix& batch);

/// Ties (p == 0.5) resolve to mutant.
inline constexpr double kDecisionThreshold = 0.5;
inline bool predict_mutant(double probability) { return probability >= kDecisionThreshold; }

/// Softmax of a logit row, computed stably.
std::array<double, kOutputDim> softmax(double logit0, double logit1);

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_checkpoint(const std::filesystem::path& path);

Matrix to_matrix(const std::vector<std::vector<double>>& rows);

}  // namespace moa::mlp
