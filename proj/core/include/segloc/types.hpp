#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace segloc {

// A segment is always a 5-consecutive-frame window (5 seconds at 1 fps).
inline constexpr std::uint32_t kSegmentLen = 5;

// Error categories, mapped by the CLI to process exit codes:
// ConfigError -> 2, DataError/FormatError -> 3, DivergenceError -> 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Polarity : std::uint8_t { negative = 0, positive = 1 };

// One video: id, T x D frame feature matrix and its video-level label set.
// Features are stored as 32-bit floats; models up-convert to double.
struct VideoRecord {
  std::string video_id;
  std::uint32_t frames = 0;  // T
  std::uint32_t dim = 0;     // D
  std::vector<float> features;  // row-major, frames * dim
  std::set<std::uint32_t> video_labels;

  const float* frame(std::uint32_t t) const {
    return features.data() + static_cast<std::size_t>(t) * dim;
  }

  bool operator==(const VideoRecord&) const = default;
};

// A human annotation: segment [start, start+5) of a video either contains
// (positive) or does not contain (negative) class_id.
struct SegmentLabel {
  std::string video_id;
  std::uint32_t start = 0;
  std::uint32_t class_id = 0;
  Polarity polarity = Polarity::negative;

  bool operator==(const SegmentLabel&) const = default;
};

struct CorpusConfig {
  std::uint32_t dim = 32;        // D
  std::uint32_t classes = 20;    // C
  std::uint32_t segment_len = kSegmentLen;  // fixed at 5
  std::uint32_t max_frames = 300;
  std::uint64_t rng_seed = 0;
};

// Knobs for the synthetic generator. Fractions are in [0,1]; frame counts
// are drawn uniformly from [frames_min, frames_max].
struct SyntheticSpec {
  std::uint32_t n_videos = 100;
  std::uint32_t frames_min = 30;
  std::uint32_t frames_max = 60;
  double classes_per_video = 2.0;  // mean classes planted per video
  double event_rate = 0.25;        // fraction of a positive video's timeline per class
  double label_fraction = 0.1;     // fraction of planted segments revealed as labels
  double noise_sigma = 0.3;        // feature noise scale
};

// Complete frame-level membership, kept for evaluation only.
struct TruthEntry {
  std::string video_id;
  std::uint32_t frame = 0;
  std::uint32_t class_id = 0;

  auto operator<=>(const TruthEntry&) const = default;
};

// (video, start) pair identifying one segment, the unit of ranking.
struct SegmentKey {
  std::string video_id;
  std::uint32_t start = 0;

  auto operator<=>(const SegmentKey&) const = default;
};

}  // namespace segloc
