#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "segloc/gbt.hpp"
#include "segloc/localizer.hpp"
#include "segloc/metrics.hpp"
#include "segloc/mlp.hpp"
#include "segloc/types.hpp"

namespace segloc {

// Everything run-all needs, read from a key=value config file with CLI
// overrides. All randomness flows from the seeds below; no stage reads
// system entropy.
struct PipelineConfig {
  std::filesystem::path out_dir;
  std::filesystem::path corpus_dir;  // empty: generate under <out_dir>/corpus

  CorpusConfig corpus;
  SyntheticSpec synth;

  double eval_fraction = 0.2;
  std::uint64_t split_seed = 11;

  TrainConfig video_model{0.3, 32, 60, {128}, 0.0, 21};
  std::int64_t frames_random_neg = -1;  // <0: 2x segment-sourced rows
  bool frames_dump = false;
  std::uint64_t frames_seed = 31;
  GbtConfig gbt{100, 4, 0.1, 5, 1.0, 1.0, 41};
  TrainConfig localizer{0.02, 1, 12, {64}, 0.0, 51};
  std::uint32_t localizer_embed = 32;

  double compose_p = 4.0;
  std::size_t top_k = 100000;
  std::uint32_t stride = 5;
  unsigned jobs = 1;
  bool resume = false;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& file);
// Applies one "key=value" override; throws ConfigError on unknown keys.
void apply_config_override(PipelineConfig& cfg, const std::string& key,
                           const std::string& value);

struct RunReport {
  // Held-out MAP per model: baseline, gbt_composed, localizer_combined,
  // rank_average.
  std::map<std::string, double> maps;
  std::filesystem::path report_file;
  std::filesystem::path final_submission;
};

// The full experiment graph: corpus -> split -> video model -> baseline ->
// frame datasets -> CV GBTs -> composition -> localizer -> combination ->
// rank average -> evaluation. Stages communicate only through files under
// out_dir, so --resume skips completed stages with identical results.
RunReport run_all(const PipelineConfig& cfg);

struct GridPoint {
  double p = 0.0;
  double map = 0.0;
};

// Re-ranks the already-composed artifacts for each exponent (nothing is
// retrained) and evaluates each on the held-out split. Upstream artifacts
// are hash-checked before and after every point.
std::vector<GridPoint> grid_search_p(const PipelineConfig& cfg,
                                     const std::vector<double>& p_values);

// Report/metrics formatting shared by `evaluate` and run-all.
std::string metrics_csv_text(const MapResult& result);
std::string evaluation_report_text(const MapResult& result, std::size_t k_limit);

}  // namespace segloc
