#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "soonet/interval.hpp"
#include "soonet/numerics/tape.hpp"

namespace soonet::loss {

using num::Var;

/// π̂_i = 1 + Σ_{u≠i} sigmoid(−α(S_i − S_u)).
std::vector<double> approx_rank(std::span<const double> scores, double alpha);

/// Σ over labels sorted descending of (2^y − 1) / log(1 + position).
double ideal_dcg(std::span<const double> labels, double log_base = M_E);

/// 1 − DCG(π̂) / IDCG; zero when every label is zero.
double approx_ndcg_loss(std::span<const double> scores, std::span<const double> labels, double alpha,
                        double log_base = M_E);

/// Element mask for score matrices; empty means every entry takes part.
using Mask = std::vector<std::uint8_t>;

/// Mean over rows of the ApproxNDCG loss of each row (anchors ranked per
/// query). Masked-out entries are ignored; rows with no positive label
/// contribute zero but still count in the mean.
template <typename T>
Var<T> rank_loss_rows(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T alpha);

/// Same along columns (queries ranked per anchor).
template <typename T>
Var<T> rank_loss_cols(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T alpha);

/// Row term plus column term.
template <typename T>
Var<T> dual_rank_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T alpha);

/// Binary cross-entropy against soft IoU labels; `scores` are probabilities.
template <typename T>
Var<T> bce_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask);

/// Per row, −log softmax(S / τ) at the highest-label entry. Rows without a
/// positive label are skipped.
template <typename T>
Var<T> nce_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T tau);

enum class RankLoss { kDual, kSingle, kBce, kNce };
std::string rank_loss_name(RankLoss kind);
RankLoss parse_rank_loss(const std::string& name);

struct RankLossOptions {
  RankLoss kind = RankLoss::kDual;
  double alpha = 0.01;
  double nce_tau = 0.1;
};

template <typename T>
Var<T> ranking_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask,
                    const RankLossOptions& options, double alpha);

inline constexpr double kIouFloor = 1e-6;

/// Mean of −ln(max(IoU, 1e-6)) between adjusted anchors and their ground
/// truth, over pairs whose unadjusted anchor overlaps the ground truth.
/// Row p of `delta` holds (δ_s, δ_e) for anchors[p] against gts[p].
template <typename T>
Var<T> iou_loss(Var<T> delta, const std::vector<Interval>& anchors, const std::vector<Interval>& gts);

/// Reference for iou_loss on plain values.
double iou_loss_reference(std::span<const double> delta, const std::vector<Interval>& anchors,
                          const std::vector<Interval>& gts);

/// λ1 · align + λ2 · reg
template <typename T>
Var<T> total_loss(Var<T> align, Var<T> reg, T lambda1, T lambda2);

}  // namespace soonet::loss
