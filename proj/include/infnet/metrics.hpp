#pragma once

#include <span>
#include <string>
#include <vector>

#include "infnet/error.hpp"

namespace infnet {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;  // 0 or 1
  std::string user_id;
};

/// Probability that a random positive outranks a random negative, ties
/// credited 0.5 (Mann-Whitney mid-rank). O(n log n) via rank sums. Throws
/// MetricError unless both classes are present.
double auc(std::span<const ScoredLabel> items);

/// Average of per-user AUC over users that have both classes; weighted by
/// the user's impression count among eligible users, or uniformly when
/// impression_weighted is false. Throws MetricError with no eligible user.
double gauc(std::span<const ScoredLabel> items, bool impression_weighted = true);

}  // namespace infnet
