#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "segloc/frame_dataset.hpp"
#include "segloc/types.hpp"

namespace segloc {

struct GbtConfig {
  std::uint32_t n_trees = 100;
  std::uint32_t max_depth = 4;
  double learning_rate = 0.1;  // shrinkage
  std::uint32_t min_samples_leaf = 5;
  double lambda_l2 = 1.0;  // leaf regularization
  double subsample = 1.0;  // row fraction per boosting round
  std::uint64_t rng_seed = 0;
};

// Binary tree over augmented frame vectors. Internal nodes route on
// x[feature] < threshold; leaves carry raw log-odds contributions (shrinkage
// is applied at accumulation time).
struct TreeNode {
  std::uint32_t feature = UINT32_MAX;  // UINT32_MAX marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature == UINT32_MAX; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double evaluate(std::span<const double> x) const;
};

struct GbtModel {
  std::uint32_t n_features = 0;
  double base_score = 0.0;  // log-odds of the training positive rate
  double learning_rate = 0.1;
  std::vector<DecisionTree> trees;
  // Training log-loss: entry 0 at base_score, then one entry per round.
  std::vector<double> train_logloss;
};

// Gradient boosting with logistic loss: per round a regression tree is fit
// to g_i = p_i - y_i with hessians h_i = p_i (1 - p_i); split gain is
// 1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)] and leaf
// values are -G/(H+l). Deterministic in the config seed.
GbtModel fit_gbt(const FrameDataset& data, const GbtConfig& cfg);
GbtModel fit_gbt(const FrameDataset& data, std::span<const std::size_t> rows,
                 const GbtConfig& cfg);

// sigmoid(base_score + learning_rate * sum of tree outputs); always in (0,1).
double predict_gbt(const GbtModel& model, std::span<const double> x);

struct FoldEnsemble {
  std::uint32_t class_id = 0;
  std::array<GbtModel, 5> folds;
  std::vector<std::uint8_t> fold_assignment;  // per dataset row
  std::array<double, 5> validation_logloss{};
  bool video_grouped = true;
};

// 5-fold cross-validated training: folds are stratified by target and
// grouped by source video (all rows of one video share a fold). Falls back
// to row-level stratification, with a warning, when fewer than 5 videos are
// available or grouping would leave a fold's training set single-class.
FoldEnsemble fit_cv(const FrameDataset& data, const GbtConfig& cfg);

// Arithmetic mean of the five fold-model probabilities.
double predict_cv(const FoldEnsemble& ensemble, std::span<const double> x);

// "SGT1" per-class model file: config echo plus the five fold models.
void save_fold_ensemble(const FoldEnsemble& ensemble, const GbtConfig& cfg,
                        const std::filesystem::path& file);
FoldEnsemble load_fold_ensemble(const std::filesystem::path& file);

}  // namespace segloc
