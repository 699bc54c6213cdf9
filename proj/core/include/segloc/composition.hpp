#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "segloc/metrics.hpp"
#include "segloc/types.hpp"

namespace segloc {

// Scores are floored at this before any exponentiation or log; MAP depends
// only on order, so flooring perturbs nothing but degenerate ties.
inline constexpr double kScoreFloor = 1e-9;

struct ScoreKey {
  std::string video_id;
  std::uint32_t start = 0;
  std::uint32_t class_id = 0;

  auto operator<=>(const ScoreKey&) const = default;
};

// The universal currency between models and combiners: (video, start, class)
// -> nonnegative finite score. Video-level tables use start = 0 throughout.
struct ScoreTable {
  std::string provenance;
  std::map<ScoreKey, double> entries;
};

struct CombinerPart {
  const ScoreTable* table = nullptr;
  double exponent = 1.0;  // weight, for the arithmetic combiner
};

// Broadcasts a video-level table to every enumerated segment of each corpus
// video: segment (v, s) gets the video's class score unchanged.
ScoreTable baseline_scores(const ScoreTable& video_table,
                           const std::vector<VideoRecord>& corpus,
                           std::uint32_t stride);

// xgb^p * vl, both probabilities floored at kScoreFloor. p > 1 shifts weight
// toward the frame model, p < 1 toward the video prior.
double compose_frame_score(double xgb_p, double vl_p, double exponent);

// Mean over the segment's frames of xgb_i^p, times the video prior. Fewer
// than 5 frames occur only at clipped video tails.
double segment_score(std::span<const double> frame_xgb, double vl_p, double exponent);

// Per shared key, the product of table_i(key)^exponent_i. Keys present in
// only some tables are dropped (with a warning).
ScoreTable geometric_combine(const std::vector<CombinerPart>& parts);

// Per shared key, the weighted arithmetic mean.
ScoreTable arithmetic_combine(const std::vector<CombinerPart>& parts);

// Meta-ensemble on ranks: each table ranks its segments per class
// (descending score, key-ascending ties); a segment absent from a table gets
// rank list-length + 1; the output orders by ascending mean rank with
// key-ascending ties.
RankedSubmission rank_average(const std::vector<const ScoreTable*>& tables,
                              std::size_t k_limit);

// Descending score, (video_id, start)-ascending ties, truncated to K;
// only segments whose start is a multiple of `stride` are kept.
RankedSubmission to_submission(const ScoreTable& table, std::size_t k_limit,
                               std::uint32_t stride);

// Score CSV: video_id,start,class_id,score (round-trip exact).
void write_score_table(const ScoreTable& table, const std::filesystem::path& file);
ScoreTable read_score_table(const std::filesystem::path& file,
                            const std::string& provenance);

// Submission CSV, one row per class: "Class,Segments" header, then
// "<class_id>,<videoId:start> <videoId:start> ...".
void write_submission(const RankedSubmission& submission,
                      const std::filesystem::path& file);
RankedSubmission read_submission(const std::filesystem::path& file);

// Combiner spec file: one "<score-csv-path> <exponent>" line per table;
// '#' starts a comment.
struct CombinerSpecFile {
  std::vector<std::pair<std::filesystem::path, double>> parts;
};
CombinerSpecFile parse_combiner_spec(const std::filesystem::path& file);

}  // namespace segloc
