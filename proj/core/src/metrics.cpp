#include "segloc/metrics.hpp"

namespace segloc {

GroundTruth GroundTruth::from_labels(const std::vector<SegmentLabel>& labels) {
  GroundTruth out;
  for (const SegmentLabel& l : labels) {
    ClassTruth& ct = out.classes[l.class_id];
    const SegmentKey key{l.video_id, l.start};
    if (l.polarity == Polarity::positive) {
      if (ct.negatives.count(key)) {
        throw DataError("ground truth: segment ('" + l.video_id + "'," +
                        std::to_string(l.start) + ") labelled both positive and "
                        "negative for class " + std::to_string(l.class_id));
      }
      ct.positives.insert(key);
    } else {
      if (ct.positives.count(key)) {
        throw DataError("ground truth: segment ('" + l.video_id + "'," +
                        std::to_string(l.start) + ") labelled both positive and "
                        "negative for class " + std::to_string(l.class_id));
      }
      ct.negatives.insert(key);
    }
  }
  return out;
}

std::optional<double> average_precision(const std::vector<SegmentKey>& predictions,
                                        const ClassTruth& truth,
                                        std::size_t k_limit) {
  const std::size_t n_pos = truth.positives.size();
  if (n_pos == 0) return std::nullopt;
  if (k_limit < 1) throw ConfigError("average_precision: K must be >= 1");

  std::size_t rank = 0;   // counts labelled predictions only
  std::size_t hits = 0;
  double ap_sum = 0.0;
  for (const SegmentKey& key : predictions) {
    const bool is_pos = truth.positives.count(key) > 0;
    if (!is_pos && truth.negatives.count(key) == 0) continue;  // unlabelled: skipped
    ++rank;
    if (rank > k_limit) break;
    if (is_pos) {
      ++hits;
      ap_sum += double(hits) / double(rank);
    }
  }
  return ap_sum / double(n_pos);
}

MapResult map_at_k(const RankedSubmission& submission, const GroundTruth& truth,
                   std::size_t k_limit) {
  static const std::vector<SegmentKey> kEmpty;
  MapResult out;
  double sum = 0.0;
  for (const auto& [class_id, class_truth] : truth.classes) {
    const auto it = submission.classes.find(class_id);
    const auto& predictions = it == submission.classes.end() ? kEmpty : it->second;
    const auto ap = average_precision(predictions, class_truth, k_limit);
    if (!ap) {
      ++out.skipped_classes;
      continue;
    }
    out.per_class[class_id] = {class_truth.positives.size(), *ap};
    sum += *ap;
  }
  if (out.per_class.empty()) {
    throw DataError("map_at_k: no class has a labelled positive segment");
  }
  out.map = sum / double(out.per_class.size());
  return out;
}

}  // namespace segloc
