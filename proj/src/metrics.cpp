#include "infnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace infnet {

double auc(std::span<const ScoredLabel> items) {
  std::size_t positives = 0;
  for (const auto& it : items) {
    if (!std::isfinite(it.score)) throw MetricError("auc: non-finite score");
    if (it.label != 0 && it.label != 1) {
      throw MetricError("auc: label must be 0 or 1, got " + std::to_string(it.label));
    }
    positives += static_cast<std::size_t>(it.label);
  }
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("auc: undefined, need both classes (got " +
                      std::to_string(positives) + " positives of " +
                      std::to_string(items.size()) + ")");
  }

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&items](std::size_t a, std::size_t b) {
    return items[a].score < items[b].score;
  });

  // Mid-ranks over tie groups; rank sum of positives gives the U statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (items[order[k]].label == 1) rank_sum_pos += mid_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double gauc(std::span<const ScoredLabel> items, bool impression_weighted) {
  // Group in first-appearance order so the reduction is deterministic.
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<ScoredLabel>> groups;
  for (const auto& it : items) {
    auto [pos, inserted] = index.try_emplace(it.user_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[pos->second].push_back(it);
  }

  double weighted = 0.0;
  double weight_total = 0.0;
  for (const auto& g : groups) {
    bool has_pos = false, has_neg = false;
    for (const auto& it : g) {
      has_pos = has_pos || it.label == 1;
      has_neg = has_neg || it.label == 0;
    }
    if (!has_pos || !has_neg) continue;  // user without both classes is skipped
    const double w = impression_weighted ? static_cast<double>(g.size()) : 1.0;
    weighted += w * auc(g);
    weight_total += w;
  }
  if (weight_total == 0.0) {
    throw MetricError("gauc: no user has both classes");
  }
  return weighted / weight_total;
}

}  // namespace infnet
