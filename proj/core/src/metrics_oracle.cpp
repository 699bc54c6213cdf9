#include "segloc/metrics_oracle.hpp"

#include <algorithm>
#include <vector>

namespace segloc {

double oracle_map(const RankedSubmission& submission, const GroundTruth& truth,
                  std::size_t k_limit) {
  double total = 0.0;
  std::size_t scored = 0;
  for (const auto& [class_id, class_truth] : truth.classes) {
    const std::size_t n_pos = class_truth.positives.size();
    if (n_pos == 0) continue;
    ++scored;

    // Keep only labelled predictions; they alone occupy ranks.
    std::vector<bool> relevant;
    if (const auto it = submission.classes.find(class_id);
        it != submission.classes.end()) {
      for (const SegmentKey& key : it->second) {
        if (class_truth.positives.count(key)) {
          relevant.push_back(true);
        } else if (class_truth.negatives.count(key)) {
          relevant.push_back(false);
        }
      }
    }

    double ap = 0.0;
    const std::size_t limit = std::min(k_limit, relevant.size());
    for (std::size_t k = 1; k <= limit; ++k) {
      if (!relevant[k - 1]) continue;
      // Precision at k, recomputed from scratch.
      std::size_t correct = 0;
      for (std::size_t j = 0; j < k; ++j) {
        if (relevant[j]) ++correct;
      }
      ap += double(correct) / double(k);
    }
    total += ap / double(n_pos);
  }
  if (scored == 0) {
    throw DataError("oracle_map: no class has a labelled positive segment");
  }
  return total / double(scored);
}

}  // namespace segloc
