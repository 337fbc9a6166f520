#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "soonet/interval.hpp"
#include "soonet/prediction.hpp"

namespace soonet::eval {

struct EvalResult {
  std::vector<std::size_t> ns;
  std::vector<double> ms;
  std::vector<double> recall;  // ns.size() × ms.size(), row-major
  std::vector<double> best_iou;  // per query, over its top max(ns) predictions
  std::size_t queries = 0;

  double at(std::size_t n, double m) const;
  /// "R@{n}-{m}" keys in a JSON object.
  std::string report() const;
};

/// Fraction of queries with at least one of the top-n predictions whose IoU
/// with the ground truth is strictly larger than m. Predictions must already
/// be in rank order; an empty list is a miss.
EvalResult recall_at(const std::vector<std::vector<Prediction>>& predictions, const std::vector<Interval>& gts,
                     const std::vector<std::size_t>& ns, const std::vector<double>& ms);

/// Greedy suppression: visit by descending score (input order breaks ties),
/// keep, drop everything whose IoU with a kept prediction exceeds threshold.
/// Stops after `limit` kept predictions when nonzero; the result is then the
/// prefix of the unlimited one.
std::vector<Prediction> nms_1d(std::vector<Prediction> predictions, double threshold, std::size_t limit = 0);

std::string recall_key(std::size_t n, double m);

}  // namespace soonet::eval
