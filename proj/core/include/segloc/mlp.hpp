#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "segloc/types.hpp"

namespace segloc {

struct TrainConfig {
  double learning_rate = 0.05;
  std::uint32_t batch_size = 32;
  std::uint32_t epochs = 40;
  std::vector<std::uint32_t> hidden_sizes = {128};
  double l2 = 0.0;
  std::uint64_t rng_seed = 0;
};

// Feed-forward multi-label classifier: ReLU hidden layers, independent
// sigmoid outputs. Parameters are doubles internally and f32 on disk.
struct MlpModel {
  std::uint32_t input_dim = 0;
  std::uint32_t output_dim = 0;
  std::vector<std::uint32_t> layer_in;   // per layer
  std::vector<std::uint32_t> layer_out;
  std::vector<std::vector<double>> weights;  // row-major out x in
  std::vector<std::vector<double>> biases;

  std::size_t n_layers() const { return weights.size(); }
};

// Glorot-uniform weights, zero biases; deterministic in seed.
MlpModel init_mlp(std::uint32_t input_dim, const std::vector<std::uint32_t>& hidden,
                  std::uint32_t output_dim, std::uint64_t seed);

// Per-class probabilities for one input (a mean-pooled video or a single
// frame; the same model serves both call sites).
std::vector<double> predict_video(const MlpModel& model, std::span<const double> input);
std::vector<double> predict_frame(const MlpModel& model, const float* frame,
                                  std::uint32_t dim);

struct MlpGradient {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

// Mean binary cross-entropy over (batch x classes) plus l2/2 * ||W||^2,
// with its gradient. Exposed so tests can check it against finite
// differences.
double mlp_loss_and_gradient(const MlpModel& model,
                             const std::vector<std::vector<double>>& inputs,
                             const std::vector<std::vector<double>>& targets,
                             double l2, MlpGradient* grad);

// Mini-batch gradient descent on mean-pooled features against video-level
// label indicators. epochs = 0 returns the initialized model unchanged.
MlpModel train_video_model(const std::vector<VideoRecord>& corpus,
                           const TrainConfig& cfg, std::uint32_t n_classes);

// "SGM1" model file: architecture header, little-endian f32 parameters.
void save_mlp(const MlpModel& model, const std::filesystem::path& file);
MlpModel load_mlp(const std::filesystem::path& file);

}  // namespace segloc
