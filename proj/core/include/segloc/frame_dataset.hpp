#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "segloc/mlp.hpp"
#include "segloc/types.hpp"

namespace segloc {

enum class RowSource : std::uint8_t {
  segment_positive = 0,
  segment_negative = 1,
  random_negative = 2,
};

// Per-class supervised table of augmented frame vectors {X, fl(X)} with
// binary targets. Segment-sourced rows come from the labelled 5-frame
// segments expanded by two frames on either side; random negatives come from
// videos not labelled with the class.
struct FrameDataset {
  std::uint32_t class_id = 0;
  std::uint32_t feature_dim = 0;  // D + C
  std::vector<double> features;   // rows() x feature_dim, row-major
  std::vector<std::uint8_t> targets;
  std::vector<RowSource> sources;
  std::vector<std::string> video_ids;

  std::size_t rows() const { return targets.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
};

// Frame indices [start-2, start+7) clipped to [0, T): up to 9 frames that
// are assumed to share the segment's polarity.
std::vector<std::uint32_t> expand_segment_frames(const SegmentLabel& label,
                                                 const VideoRecord& video);

// n_random_neg < 0 selects the default of 2x the segment-sourced row count.
FrameDataset build_frame_dataset(std::uint32_t class_id,
                                 const std::vector<SegmentLabel>& labels,
                                 const std::vector<VideoRecord>& corpus,
                                 const MlpModel& fl_model,
                                 std::int64_t n_random_neg,
                                 std::uint64_t seed);

// Inspection dump: target,source,video_id,f0..f{D+C-1}.
void write_frame_dataset_csv(const FrameDataset& dataset,
                             const std::filesystem::path& file);

}  // namespace segloc
