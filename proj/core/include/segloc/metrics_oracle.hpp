#pragma once

#include <cstddef>

#include "segloc/metrics.hpp"

namespace segloc {

// Brute-force MAP@K used only as a test oracle. Recomputes the precision at
// every rank by rescanning the prefix (O(n^2)); shares no logic with
// map_at_k beyond the input types.
double oracle_map(const RankedSubmission& submission, const GroundTruth& truth,
                  std::size_t k_limit);

}  // namespace segloc
