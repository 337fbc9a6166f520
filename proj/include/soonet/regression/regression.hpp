#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "soonet/encoder/encoder.hpp"
#include "soonet/interval.hpp"
#include "soonet/prediction.hpp"

namespace soonet::reg {

using num::Var;

/// Softmax over w·v̂_k restricted to each segment's frames, then the weighted
/// sum of those frames. `w` is 1×D.
template <typename T>
Var<T> attentive_pool(Var<T> frames, Var<T> w, const num::SegmentOffsets& segments);

/// Plain-value version over frames [lo, hi) of `frames`.
template <typename T>
std::vector<T> attentive_pool(const num::Tensor<T>& frames, std::size_t lo, std::size_t hi, std::span<const T> w);

/// f = [e ⊙ q ; pooled ⊙ q] through the MLP; one (δ_s, δ_e) row per input row.
template <typename T>
Var<T> predict_bias(Var<T> anchor_features, Var<T> pooled, Var<T> queries, const enc::MlpWeights<T>& mlp);

/// Shifts each boundary by δ times the anchor length, clamps into
/// [0, video_len] and falls back to the anchor if the result is empty.
Interval adjust_bounds(Interval anchor, double delta_start, double delta_end, double video_len);

/// Highest-scoring n predictions; input order breaks score ties. With NMS the
/// suppression runs before truncation.
std::vector<Prediction> top_n(std::vector<Prediction> predictions, std::size_t n, bool use_nms = false,
                              double nms_threshold = 0.5);

}  // namespace soonet::reg
