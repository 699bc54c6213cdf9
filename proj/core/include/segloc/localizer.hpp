#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "segloc/composition.hpp"
#include "segloc/mlp.hpp"
#include "segloc/types.hpp"

namespace segloc {

// 2-gate gated recurrent cell over inputs of size D+E with hidden size H.
struct GruCell {
  // Input weights are H x (D+E), recurrent weights H x H, biases H.
  std::vector<double> w_update, u_update, b_update;
  std::vector<double> w_reset, u_reset, b_reset;
  std::vector<double> w_cand, u_cand, b_cand;
};

// Localization network: class embedding broadcast-concatenated to every
// frame vector, a bidirectional recurrent pass over the whole video, and a
// per-frame logit from the concatenated hidden states.
struct LocalizerModel {
  std::uint32_t input_dim = 0;   // D
  std::uint32_t n_classes = 0;   // C
  std::uint32_t embed_dim = 32;  // E
  std::uint32_t hidden_dim = 64; // H
  std::vector<double> embedding;  // C x E
  GruCell forward_cell;
  GruCell backward_cell;
  std::vector<double> out_weight;  // 2H
  double out_bias = 0.0;
};

LocalizerModel init_localizer(std::uint32_t input_dim, std::uint32_t n_classes,
                              std::uint32_t embed_dim, std::uint32_t hidden_dim,
                              std::uint64_t seed);

enum class FrameTarget : std::uint8_t { negative = 0, positive = 1, unlabelled = 2 };

// Per-frame targets for one (video, class) pair; frames under a positive
// labelled segment are 1, under a negative one 0, anything else unlabelled.
struct MaskedTargets {
  std::string video_id;
  std::uint32_t class_id = 0;
  std::vector<FrameTarget> frames;
};

// Pairs possessing at least one labelled segment, in (video_id, class_id)
// order. Positive labels win where segments overlap.
std::vector<MaskedTargets> build_masked_targets(const std::vector<VideoRecord>& corpus,
                                                const std::vector<SegmentLabel>& labels);

// One logit per frame, any T (dynamic length).
std::vector<double> localizer_logits(const LocalizerModel& model,
                                     const VideoRecord& video, std::uint32_t class_id);
std::vector<double> localizer_forward(const LocalizerModel& model,
                                      const VideoRecord& video, std::uint32_t class_id);

// Binary cross-entropy summed over labelled frames; unlabelled frames are
// skipped outright, so they contribute neither loss nor gradient.
double masked_bce_loss(std::span<const double> logits,
                       std::span<const FrameTarget> targets);

struct LocalizerGradient {
  std::vector<double> embedding;
  GruCell forward_cell;
  GruCell backward_cell;
  std::vector<double> out_weight;
  double out_bias = 0.0;
};

// Masked loss for one (video, class) pair and, when grad is non-null, its
// gradient for every parameter. Exposed for the finite-difference checks.
double localizer_loss_and_gradient(const LocalizerModel& model,
                                   const VideoRecord& video,
                                   const MaskedTargets& targets,
                                   LocalizerGradient* grad);

// Deterministic per-sequence SGD on the masked loss.
LocalizerModel train_localizer(const std::vector<VideoRecord>& corpus,
                               const std::vector<SegmentLabel>& labels,
                               const TrainConfig& cfg, std::uint32_t n_classes,
                               std::uint32_t embed_dim = 32);

// Segment score = mean of the 5 per-frame probabilities (fewer at clipped
// tails); keys enumerate all stride-aligned segments x classes.
ScoreTable localizer_scores(const LocalizerModel& model,
                            const std::vector<VideoRecord>& corpus,
                            std::uint32_t stride,
                            const std::vector<std::uint32_t>& classes,
                            unsigned jobs = 1);

// Flat views over every parameter array, in serialization order; the
// gradient uses the same layout.
std::vector<std::span<double>> parameter_views(LocalizerModel& model);
std::vector<std::span<double>> gradient_views(LocalizerGradient& grad,
                                              const LocalizerModel& shape);

// "SGL1" model file, f64 little-endian parameters (exact round-trip).
void save_localizer(const LocalizerModel& model, const std::filesystem::path& file);
LocalizerModel load_localizer(const std::filesystem::path& file);

}  // namespace segloc
