#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "segloc/types.hpp"

namespace segloc {

// Labelled segments for one class. Only these are "considered" by the
// metric; anything else in a submission is skipped without consuming a rank.
struct ClassTruth {
  std::set<SegmentKey> positives;
  std::set<SegmentKey> negatives;
};

struct GroundTruth {
  std::map<std::uint32_t, ClassTruth> classes;

  static GroundTruth from_labels(const std::vector<SegmentLabel>& labels);
};

// Per class: segment keys in rank order, best first, already tie-broken.
struct RankedSubmission {
  std::map<std::uint32_t, std::vector<SegmentKey>> classes;
};

// Average precision over the first K labelled predictions. Returns nullopt
// when the class has no labelled positives (excluded from MAP, not an error).
std::optional<double> average_precision(const std::vector<SegmentKey>& predictions,
                                        const ClassTruth& truth,
                                        std::size_t k_limit);

struct ClassAp {
  std::size_t n_pos = 0;
  double ap = 0.0;
};

struct MapResult {
  double map = 0.0;
  std::map<std::uint32_t, ClassAp> per_class;  // scored classes only
  std::size_t skipped_classes = 0;             // classes with no positives
};

// Unweighted mean of per-class AP over classes with at least one labelled
// positive. Classes absent from the submission contribute AP = 0.
MapResult map_at_k(const RankedSubmission& submission, const GroundTruth& truth,
                   std::size_t k_limit);

}  // namespace segloc
