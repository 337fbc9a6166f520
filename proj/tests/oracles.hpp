#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Plain loops, no shared code with the library beyond data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "soonet/interval.hpp"
#include "soonet/numerics/tensor.hpp"
#include "soonet/prediction.hpp"

namespace oracle {

using soonet::Interval;
using soonet::Prediction;
using soonet::num::Tensor;

inline Tensor<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  auto t = Tensor<double>::matrix(r, c);
  for (auto& x : t.mutable_data()) x = n(rng);
  return t;
}

// out = softmax(Q Kᵀ / √dh) V per head over all rows, then the output projection.
inline Tensor<double> dense_mha(const Tensor<double>& x, const Tensor<double>& wqkv, const Tensor<double>& bqkv,
                                const Tensor<double>& wo, const Tensor<double>& bo, std::size_t heads) {
  const std::size_t s = x.rows(), d = x.cols(), dh = d / heads;
  std::vector<double> qkv(s * 3 * d, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < 3 * d; ++j) {
      double acc = bqkv(0, j);
      for (std::size_t k = 0; k < d; ++k) acc += x(i, k) * wqkv(k, j);
      qkv[i * 3 * d + j] = acc;
    }
  }
  std::vector<double> att(s * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> logits(s);
      for (std::size_t j = 0; j < s; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qkv[i * 3 * d + h * dh + c] * qkv[j * 3 * d + d + h * dh + c];
        logits[j] = dot / std::sqrt(double(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < s; ++j) {
        for (std::size_t c = 0; c < dh; ++c) att[i * d + h * dh + c] += logits[j] / z * qkv[j * 3 * d + 2 * d + h * dh + c];
      }
    }
  }
  auto out = Tensor<double>::matrix(s, d);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = bo(0, j);
      for (std::size_t k = 0; k < d; ++k) acc += att[i * d + k] * wo(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

inline double iou(Interval a, Interval b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  return inter / (a.length() + b.length() - inter);
}

// True ranks: 1 + number of strictly larger scores.
inline std::vector<double> true_ranks(const std::vector<double>& s) {
  std::vector<double> r(s.size(), 1.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] > s[i]) r[i] += 1.0;
    }
  }
  return r;
}

// 1 − DCG(true ranks) / DCG(ideal), natural-log discount, gain 2^y − 1.
inline double exact_ndcg_loss(const std::vector<double>& s, const std::vector<double>& y) {
  const auto r = true_ranks(s);
  double dcg = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) dcg += (std::pow(2.0, y[i]) - 1.0) / std::log(1.0 + r[i]);
  std::vector<double> g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = std::pow(2.0, y[i]) - 1.0;
  std::sort(g.rbegin(), g.rend());
  double ideal = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) ideal += g[i] / std::log(2.0 + double(i));
  return ideal > 0.0 ? 1.0 - dcg / ideal : 0.0;
}

// Quadratic greedy suppression written from the definition: repeatedly take
// the best remaining candidate (earliest on ties) and discard overlaps.
inline std::vector<Prediction> brute_nms(std::vector<Prediction> p, double threshold) {
  std::vector<Prediction> kept;
  std::vector<bool> alive(p.size(), true);
  while (true) {
    std::size_t best = p.size();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (alive[i] && (best == p.size() || p[i].score > p[best].score)) best = i;
    }
    if (best == p.size()) break;
    kept.push_back(p[best]);
    alive[best] = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (alive[i] && iou(p[best].span, p[i].span) > threshold) alive[i] = false;
    }
  }
  return kept;
}

// Hit when any of the first n predictions has IoU > m with the ground truth.
inline double brute_recall(const std::vector<std::vector<Prediction>>& preds, const std::vector<Interval>& gts,
                           std::size_t n, double m) {
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < preds.size(); ++q) {
    bool hit = false;
    for (std::size_t k = 0; k < std::min(n, preds[q].size()); ++k) hit = hit || iou(preds[q][k].span, gts[q]) > m;
    hits += hit;
  }
  return double(hits) / double(preds.size());
}

// Least-squares fit y = a + b x; returns R².
inline double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
}

}  // namespace oracle
