#include "soonet/regression/regression.hpp"

#include <algorithm>
#include <cmath>

#include "soonet/errors.hpp"
#include "soonet/eval/eval.hpp"

namespace soonet::reg {

template <typename T>
Var<T> attentive_pool(Var<T> frames, Var<T> w, const num::SegmentOffsets& segments) {
  if (w.size() != frames.cols()) throw DimensionError("attentive_pool: weight must have D entries");
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    if (segments[s + 1] <= segments[s]) throw UsageError("attentive_pool: anchor without valid frames");
  }
  auto logits = num::matmul_nt(frames, num::reshape(w, num::Shape{1, frames.cols()}));
  return num::segment_softmax_pool(frames, logits, segments);
}

template <typename T>
std::vector<T> attentive_pool(const num::Tensor<T>& frames, std::size_t lo, std::size_t hi, std::span<const T> w) {
  if (hi <= lo) throw UsageError("attentive_pool: anchor without valid frames");
  const std::size_t d = frames.cols();
  std::vector<double> logit(hi - lo);
  for (std::size_t k = lo; k < hi; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += double(frames(k, c)) * double(w[c]);
    logit[k - lo] = s;
  }
  const double mx = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  for (auto& x : logit) z += (x = std::exp(x - mx));
  std::vector<double> acc(d, 0.0);
  for (std::size_t k = lo; k < hi; ++k) {
    for (std::size_t c = 0; c < d; ++c) acc[c] += logit[k - lo] / z * double(frames(k, c));
  }
  return std::vector<T>(acc.begin(), acc.end());
}

template <typename T>
Var<T> predict_bias(Var<T> anchor_features, Var<T> pooled, Var<T> queries, const enc::MlpWeights<T>& mlp) {
  auto f = num::concat_cols(num::mul(anchor_features, queries), num::mul(pooled, queries));
  return enc::mlp(f, mlp);
}

Interval adjust_bounds(Interval anchor, double delta_start, double delta_end, double video_len) {
  const double len = anchor.length();
  double s = anchor.start + delta_start * len;
  double e = anchor.end + delta_end * len;
  if (!std::isfinite(s) || !std::isfinite(e)) return anchor;
  s = std::clamp(s, 0.0, video_len);
  e = std::clamp(e, 0.0, video_len);
  if (!(s < e)) return anchor;
  return {s, e};
}

std::vector<Prediction> top_n(std::vector<Prediction> predictions, std::size_t n, bool use_nms,
                              double nms_threshold) {
  if (n == 0) throw ParameterError("n must be >= 1");
  if (use_nms) {
    predictions = eval::nms_1d(std::move(predictions), nms_threshold, n);
  } else {
    std::stable_sort(predictions.begin(), predictions.end(),
                     [](const Prediction& a, const Prediction& b) { return a.score > b.score; });
  }
  if (predictions.size() > n) predictions.resize(n);
  return predictions;
}

#define SOONET_INSTANTIATE_REGRESSION(T)                                                              \
  template Var<T> attentive_pool<T>(Var<T>, Var<T>, const num::SegmentOffsets&);                     \
  template std::vector<T> attentive_pool<T>(const num::Tensor<T>&, std::size_t, std::size_t,          \
                                            std::span<const T>);                                      \
  template Var<T> predict_bias<T>(Var<T>, Var<T>, Var<T>, const enc::MlpWeights<T>&);

SOONET_INSTANTIATE_REGRESSION(float)
SOONET_INSTANTIATE_REGRESSION(double)

}  // namespace soonet::reg
