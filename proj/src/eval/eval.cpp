#include "soonet/eval/eval.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "soonet/anchors/anchors.hpp"
#include "soonet/errors.hpp"

namespace soonet::eval {

std::string recall_key(std::size_t n, double m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "R@%zu-%g", n, m);
  return buf;
}

double EvalResult::at(std::size_t n, double m) const {
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t j = 0; j < ms.size(); ++j) {
      if (ns[i] == n && ms[j] == m) return recall[i * ms.size() + j];
    }
  }
  throw UsageError("no recall computed for " + recall_key(n, m));
}

std::string EvalResult::report() const {
  nlohmann::ordered_json j;
  j["queries"] = queries;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t k = 0; k < ms.size(); ++k) j[recall_key(ns[i], ms[k])] = recall[i * ms.size() + k];
  }
  return j.dump();
}

EvalResult recall_at(const std::vector<std::vector<Prediction>>& predictions, const std::vector<Interval>& gts,
                     const std::vector<std::size_t>& ns, const std::vector<double>& ms) {
  if (predictions.size() != gts.size()) throw UsageError("recall_at: one ground truth per query expected");
  EvalResult r;
  r.ns = ns;
  r.ms = ms;
  r.queries = gts.size();
  r.recall.assign(ns.size() * ms.size(), 0.0);
  const std::size_t max_n = ns.empty() ? 0 : *std::max_element(ns.begin(), ns.end());
  for (std::size_t q = 0; q < gts.size(); ++q) {
    const auto& preds = predictions[q];
    // Running best IoU over the first k predictions.
    std::vector<double> best(std::min(preds.size(), max_n), 0.0);
    double running = 0.0;
    for (std::size_t k = 0; k < best.size(); ++k) {
      running = std::max(running, anchors::temporal_iou(preds[k].span, gts[q]));
      best[k] = running;
    }
    r.best_iou.push_back(running);
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const std::size_t k = std::min(ns[i], best.size());
      const double b = k ? best[k - 1] : 0.0;
      for (std::size_t j = 0; j < ms.size(); ++j) {
        if (k && b > ms[j]) r.recall[i * ms.size() + j] += 1.0;
      }
    }
  }
  if (r.queries) {
    for (auto& x : r.recall) x /= double(r.queries);
  }
  return r;
}

std::vector<Prediction> nms_1d(std::vector<Prediction> predictions, double threshold, std::size_t limit) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ParameterError("NMS threshold must lie in [0, 1]");
  std::stable_sort(predictions.begin(), predictions.end(),
                   [](const Prediction& a, const Prediction& b) { return a.score > b.score; });
  std::vector<Prediction> kept;
  std::vector<char> dropped(predictions.size(), 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (dropped[i]) continue;
    kept.push_back(predictions[i]);
    if (kept.size() == limit) break;
    const Interval a = predictions[i].span;
    for (std::size_t j = i + 1; j < predictions.size(); ++j) {
      if (!dropped[j] && anchors::temporal_iou(a, predictions[j].span) > threshold) dropped[j] = 1;
    }
  }
  return kept;
}

}  // namespace soonet::eval
