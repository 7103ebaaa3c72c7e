#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "voxrag/error.hpp"

namespace voxrag::eval {

/// |top-k ∩ relevant| / |relevant|.
inline double recall_at_k(std::span<const std::string> ranked, const std::unordered_set<std::string>& relevant,
                          std::size_t k) {
  if (relevant.empty()) throw Error(Errc::UndefinedMetric, "recall with an empty relevant set");
  std::unordered_set<std::string> seen;
  std::size_t found = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!seen.insert(ranked[i]).second) throw Error(Errc::InvariantViolation, "duplicate id in ranking: " + ranked[i]);
    if (i < k && relevant.contains(ranked[i])) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(relevant.size());
}

/// Binary-gain nDCG: DCG = sum label_i / log2(i + 1) over ranks 1..k, divided
/// by the DCG of min(total_relevant, k) relevant items placed first.
inline double ndcg_at_k(std::span<const int> ranked_labels, std::size_t total_relevant, std::size_t k) {
  std::size_t ones = 0;
  for (int label : ranked_labels) {
    if (label != 0 && label != 1) throw Error(Errc::InvariantViolation, "labels must be 0 or 1");
    ones += static_cast<std::size_t>(label);
  }
  if (total_relevant < ones) throw Error(Errc::InvariantViolation, "total_relevant below the number of relevant labels");
  if (total_relevant == 0) throw Error(Errc::UndefinedMetric, "nDCG with no relevant items");

  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked_labels.size()); ++i) {
    if (ranked_labels[i] == 1) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(total_relevant, k); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

}  // namespace voxrag::eval
