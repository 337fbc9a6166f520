#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "soonet/anchors/anchors.hpp"
#include "soonet/numerics/ops.hpp"
#include "soonet/numerics/tensor.hpp"

namespace soonet::rank {

inline constexpr double kCosineEps = 1e-8;

/// sigmoid(cos(e_i, q)) for every row of `anchor_features`.
template <typename T>
std::vector<double> context_scores(const num::Tensor<T>& anchor_features, std::span<const T> query);

/// Global anchor indices sorted by descending score. Ties go to the earlier
/// start, then the smaller scale, then the lower index.
std::vector<std::size_t> coarse_rank(std::span<const double> scores, const anchors::AnchorGrid& grid);

/// Same ordering restricted to `subset`; `scores[i]` belongs to `subset[i]`.
/// Returns positions into `subset`.
std::vector<std::size_t> rank_subset(std::span<const double> scores, std::span<const std::size_t> subset,
                                     const anchors::AnchorGrid& grid);

/// The m best anchors of each scale (all of them when a scale has fewer),
/// concatenated scale by scale, each scale in ranked order.
std::vector<std::size_t> select_topm(std::span<const double> scores, const anchors::AnchorGrid& grid,
                                     std::size_t m);

/// sigmoid(mean_k cos(v̂_k, q)) per segment of `frames`.
template <typename T>
std::vector<double> content_scores(const num::Tensor<T>& frames, const num::SegmentOffsets& segments,
                                   std::span<const T> query);

/// S̃_ctx + S_ctn elementwise.
std::vector<double> rerank(std::span<const double> ctx_subset, std::span<const double> ctn);

}  // namespace soonet::rank
