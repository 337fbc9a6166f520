#include "soonet/losses/losses.hpp"

#include <algorithm>
#include <functional>
#include <memory>

#include "soonet/anchors/anchors.hpp"
#include "soonet/errors.hpp"
#include "soonet/numerics/ops.hpp"

namespace soonet::loss {
namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gain(double y) { return std::exp2(y) - 1.0; }

using Lists = std::vector<std::vector<std::size_t>>;

void check_matrix(const num::Shape& scores, const num::Shape& labels, const Mask& mask, const char* what) {
  if (scores.size() != 2) throw UsageError(std::string(what) + ": scores must be a matrix");
  if (scores != labels) {
    throw UsageError(std::string(what) + ": scores " + num::shape_string(scores) + " vs labels " +
                     num::shape_string(labels));
  }
  if (!mask.empty() && mask.size() != num::element_count(scores)) {
    throw UsageError(std::string(what) + ": mask size does not match the score matrix");
  }
}

Lists row_lists(std::size_t rows, std::size_t cols, const Mask& mask) {
  Lists out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.empty() || mask[r * cols + c]) out[r].push_back(r * cols + c);
    }
  }
  return out;
}

Lists col_lists(std::size_t rows, std::size_t cols, const Mask& mask) {
  Lists out(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      if (mask.empty() || mask[r * cols + c]) out[c].push_back(r * cols + c);
    }
  }
  return out;
}

// Pairwise sigmoids σ(−α(x_i − x_u)) for one list. With b = exp(α(x − max x))
// each pair costs one division, which is exact while α·range stays inside the
// exponent range; wider lists fall back to one exp per pair.
class PairSigmoids {
 public:
  PairSigmoids(const std::vector<double>& x, double alpha) : x_(x), alpha_(alpha) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    ratio_ = x.empty() || alpha * (*hi - *lo) < kMaxExponent;
    if (ratio_) {
      b_.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) b_[i] = std::exp(alpha * (x[i] - *hi));
    }
  }

  // out[u] = σ_iu for every u > i.
  void row(std::size_t i, double* out) const {
    const std::size_t k = x_.size();
    if (ratio_) {
      const double bi = b_[i];
      const double* b = b_.data();
#pragma omp simd
      for (std::size_t u = i + 1; u < k; ++u) out[u] = b[u] / (b[u] + bi);
    } else {
      for (std::size_t u = i + 1; u < k; ++u) out[u] = stable_sigmoid(-alpha_ * (x_[i] - x_[u]));
    }
  }

 private:
  static constexpr double kMaxExponent = 600.0;
  const std::vector<double>& x_;
  double alpha_;
  bool ratio_ = false;
  std::vector<double> b_;
};

// Mean ApproxNDCG loss over index lists into a flat score array. Per list the
// adjoint is dL/dS_j = α Σ_{i≠j} s_ij(1−s_ij)(c_i − c_j) with
// c_i = g_i / (Z (1+π̂_i) ln²(1+π̂_i)).
template <typename T>
Var<T> ndcg_over_lists(Var<T> scores, const num::Tensor<T>& labels, Lists lists, double alpha,
                       const char* op) {
  if (!(alpha > 0.0)) throw ParameterError("rank loss temperature must be positive");
  const auto s = scores.value().data();
  const auto y = labels.data();
  num::require_finite(s, op);
  auto weights = std::make_shared<std::vector<std::vector<double>>>(lists.size());
  double total = 0.0;
  std::vector<double> pi, g, x, t;
  for (std::size_t li = 0; li < lists.size(); ++li) {
    const auto& idx = lists[li];
    const std::size_t k = idx.size();
    if (k == 0) continue;
    g.resize(k);
    for (std::size_t i = 0; i < k; ++i) g[i] = gain(double(y[idx[i]]));
    std::vector<double> sorted = g;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += sorted[i] / std::log(double(i) + 2.0);
    if (z <= 0.0) continue;
    x.resize(k);
    for (std::size_t i = 0; i < k; ++i) x[i] = double(s[idx[i]]);
    const PairSigmoids sig(x, alpha);
    pi.assign(k, 1.0);
    t.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      sig.row(i, t.data());
      double row = 0.0;
      for (std::size_t u = i + 1; u < k; ++u) {
        row += t[u];
        pi[u] += 1.0 - t[u];
      }
      pi[i] += row;
    }
    double dcg = 0.0;
    auto& c = (*weights)[li];
    c.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double l = std::log(1.0 + pi[i]);
      dcg += g[i] / l;
      c[i] = g[i] / (z * (1.0 + pi[i]) * l * l);
    }
    total += 1.0 - dcg / z;
  }
  const double n = double(lists.size());
  const T value = lists.empty() ? T{0} : T(total / n);
  return scores.tape().record(
      op, num::Tensor<T>::scalar(value), {scores},
      [scores, lists = std::move(lists), weights, alpha, n](num::Tape<T>& t, std::size_t self) {
        const double up = double(t.grad_span(self)[0]) / n;
        const auto s = t.value(scores.id()).data();
        auto acc = t.accumulator(scores.id());
        std::vector<double> x, grad, sig_row;
        for (std::size_t li = 0; li < lists.size(); ++li) {
          const auto& c = (*weights)[li];
          if (c.empty()) continue;
          const auto& idx = lists[li];
          const std::size_t k = idx.size();
          x.resize(k);
          for (std::size_t i = 0; i < k; ++i) x[i] = double(s[idx[i]]);
          grad.assign(k, 0.0);
          sig_row.resize(k);
          const PairSigmoids sig(x, alpha);
          for (std::size_t i = 0; i < k; ++i) {
            sig.row(i, sig_row.data());
            const double ci = c[i];
            double gi = 0.0;
            for (std::size_t u = i + 1; u < k; ++u) {
              const double siu = sig_row[u];
              const double d = alpha * up * siu * (1.0 - siu) * (ci - c[u]);
              grad[u] += d;
              gi -= d;
            }
            grad[i] += gi;
          }
          for (std::size_t i = 0; i < k; ++i) acc[idx[i]] += T(grad[i]);
        }
      });
}

}  // namespace

std::vector<double> approx_rank(std::span<const double> scores, double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("rank temperature must be positive");
  std::vector<double> pi(scores.size(), 1.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t u = i + 1; u < scores.size(); ++u) {
      const double siu = stable_sigmoid(-alpha * (scores[i] - scores[u]));
      pi[i] += siu;
      pi[u] += 1.0 - siu;
    }
  }
  return pi;
}

double ideal_dcg(std::span<const double> labels, double log_base) {
  std::vector<double> g(labels.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = gain(labels[i]);
  std::sort(g.begin(), g.end(), std::greater<>());
  const double lb = std::log(log_base);
  double z = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) z += g[i] / (std::log(double(i) + 2.0) / lb);
  return z;
}

double approx_ndcg_loss(std::span<const double> scores, std::span<const double> labels, double alpha,
                        double log_base) {
  if (scores.size() != labels.size()) throw UsageError("approx_ndcg_loss: scores and labels differ in length");
  if (!(log_base > 0.0) || log_base == 1.0) throw ParameterError("log base must be positive and not 1");
  const double z = ideal_dcg(labels, log_base);
  if (z <= 0.0) return 0.0;
  const auto pi = approx_rank(scores, alpha);
  const double lb = std::log(log_base);
  double dcg = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) dcg += gain(labels[i]) / (std::log(1.0 + pi[i]) / lb);
  return 1.0 - dcg / z;
}

template <typename T>
Var<T> rank_loss_rows(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T alpha) {
  check_matrix(scores.shape(), labels.shape(), mask, "rank_loss_rows");
  return ndcg_over_lists(scores, labels, row_lists(scores.rows(), scores.cols(), mask), double(alpha),
                         "rank_loss_rows");
}

template <typename T>
Var<T> rank_loss_cols(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T alpha) {
  check_matrix(scores.shape(), labels.shape(), mask, "rank_loss_cols");
  return ndcg_over_lists(scores, labels, col_lists(scores.rows(), scores.cols(), mask), double(alpha),
                         "rank_loss_cols");
}

template <typename T>
Var<T> dual_rank_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T alpha) {
  return num::add(rank_loss_rows(scores, labels, mask, alpha), rank_loss_cols(scores, labels, mask, alpha));
}

template <typename T>
Var<T> bce_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask) {
  check_matrix(scores.shape(), labels.shape(), mask, "bce_loss");
  constexpr double kClip = 1e-12;
  const auto s = scores.value().data();
  const auto y = labels.data();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double p = std::clamp(double(s[i]), kClip, 1.0 - kClip);
    total -= double(y[i]) * std::log(p) + (1.0 - double(y[i])) * std::log(1.0 - p);
    ++count;
  }
  const double n = double(count);
  return scores.tape().record(
      "bce_loss", num::Tensor<T>::scalar(count ? T(total / n) : T{0}), {scores},
      [scores, labels, mask, n](num::Tape<T>& t, std::size_t self) {
        if (n == 0) return;
        const double up = double(t.grad_span(self)[0]) / n;
        const auto s = t.value(scores.id()).data();
        const auto y = labels.data();
        auto acc = t.accumulator(scores.id());
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (!mask.empty() && !mask[i]) continue;
          const double p = double(s[i]);
          if (p <= kClip || p >= 1.0 - kClip) continue;
          acc[i] += T(up * (-double(y[i]) / p + (1.0 - double(y[i])) / (1.0 - p)));
        }
      });
}

template <typename T>
Var<T> nce_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask, T tau) {
  check_matrix(scores.shape(), labels.shape(), mask, "nce_loss");
  if (!(tau > T{0})) throw ParameterError("nce temperature must be positive");
  const Lists lists = row_lists(scores.rows(), scores.cols(), mask);
  const auto s = scores.value().data();
  const auto y = labels.data();
  // Per counted row: the positive's flat index and the softmax over the row.
  auto positives = std::make_shared<std::vector<std::size_t>>(lists.size(), std::size_t(-1));
  auto probs = std::make_shared<std::vector<std::vector<double>>>(lists.size());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < lists.size(); ++r) {
    const auto& idx = lists[r];
    if (idx.empty()) continue;
    std::size_t best = idx[0];
    for (std::size_t i : idx) {
      if (y[i] > y[best]) best = i;
    }
    if (!(y[best] > T{0})) continue;
    double mx = -INFINITY;
    for (std::size_t i : idx) mx = std::max(mx, double(s[i]) / double(tau));
    auto& p = (*probs)[r];
    p.resize(idx.size());
    double z = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      p[j] = std::exp(double(s[idx[j]]) / double(tau) - mx);
      z += p[j];
    }
    for (auto& x : p) x /= z;
    total += std::log(z) + mx - double(s[best]) / double(tau);
    (*positives)[r] = best;
    ++count;
  }
  const double n = double(count);
  return scores.tape().record(
      "nce_loss", num::Tensor<T>::scalar(count ? T(total / n) : T{0}), {scores},
      [scores, lists, positives, probs, n, tau](num::Tape<T>& t, std::size_t self) {
        if (n == 0) return;
        const double up = double(t.grad_span(self)[0]) / (n * double(tau));
        auto acc = t.accumulator(scores.id());
        for (std::size_t r = 0; r < lists.size(); ++r) {
          if ((*positives)[r] == std::size_t(-1)) continue;
          const auto& idx = lists[r];
          const auto& p = (*probs)[r];
          for (std::size_t j = 0; j < idx.size(); ++j) {
            acc[idx[j]] += T(up * (p[j] - (idx[j] == (*positives)[r] ? 1.0 : 0.0)));
          }
        }
      });
}

std::string rank_loss_name(RankLoss kind) {
  switch (kind) {
    case RankLoss::kDual: return "dual";
    case RankLoss::kSingle: return "single";
    case RankLoss::kBce: return "bce";
    case RankLoss::kNce: return "nce";
  }
  return "?";
}

RankLoss parse_rank_loss(const std::string& name) {
  if (name == "dual") return RankLoss::kDual;
  if (name == "single") return RankLoss::kSingle;
  if (name == "bce") return RankLoss::kBce;
  if (name == "nce") return RankLoss::kNce;
  throw ParameterError("unknown loss variant '" + name + "' (expected dual, single, bce or nce)");
}

template <typename T>
Var<T> ranking_loss(Var<T> scores, const num::Tensor<T>& labels, const Mask& mask,
                    const RankLossOptions& options, double alpha) {
  switch (options.kind) {
    case RankLoss::kDual: return dual_rank_loss(scores, labels, mask, T(alpha));
    case RankLoss::kSingle: return rank_loss_rows(scores, labels, mask, T(alpha));
    case RankLoss::kBce: return bce_loss(scores, labels, mask);
    case RankLoss::kNce: return nce_loss(scores, labels, mask, T(options.nce_tau));
  }
  throw UsageError("unknown loss variant");
}

namespace {

struct IouTerm {
  double loss = 0.0;
  double d_start = 0.0;  // d loss / d ŝ
  double d_end = 0.0;
};

IouTerm iou_term(double s, double e, const Interval& gt) {
  IouTerm out;
  if (!(e > s)) {
    out.loss = -std::log(kIouFloor);
    return out;
  }
  const double lo = std::max(s, gt.start), hi = std::min(e, gt.end);
  const double inter = std::max(0.0, hi - lo);
  const double uni = (e - s) + gt.length() - inter;
  const double iou = inter / uni;
  if (iou < kIouFloor) {
    out.loss = -std::log(kIouFloor);
    return out;
  }
  out.loss = -std::log(iou);
  const double di_ds = s > gt.start ? -1.0 : 0.0;
  const double di_de = e < gt.end ? 1.0 : 0.0;
  const double du_ds = -1.0 - di_ds, du_de = 1.0 - di_de;
  const double scale = -1.0 / iou / (uni * uni);
  out.d_start = scale * (di_ds * uni - inter * du_ds);
  out.d_end = scale * (di_de * uni - inter * du_de);
  return out;
}

bool contributes(const Interval& anchor, const Interval& gt) {
  return std::min(anchor.end, gt.end) - std::max(anchor.start, gt.start) > 0.0;
}

}  // namespace

double iou_loss_reference(std::span<const double> delta, const std::vector<Interval>& anchors,
                          const std::vector<Interval>& gts) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < anchors.size(); ++p) {
    const Interval a = anchors[p], g = gts[p];
    if (!contributes(a, g)) continue;
    const double len = a.length();
    const double s = a.start + delta[2 * p] * len, e = a.end + delta[2 * p + 1] * len;
    const double iou = e > s ? anchors::temporal_iou({s, e}, g) : 0.0;
    total -= std::log(std::max(iou, kIouFloor));
    ++count;
  }
  return count ? total / double(count) : 0.0;
}

template <typename T>
Var<T> iou_loss(Var<T> delta, const std::vector<Interval>& anchors, const std::vector<Interval>& gts) {
  if (anchors.size() != gts.size()) throw UsageError("iou_loss: anchors and ground truths differ in count");
  if (delta.shape() != num::Shape{anchors.size(), 2}) {
    throw DimensionError("iou_loss: delta must be " + std::to_string(anchors.size()) + "x2, got " +
                         num::shape_string(delta.shape()));
  }
  const auto d = delta.value().data();
  num::require_finite(d, "iou_loss");
  auto grads = std::make_shared<std::vector<double>>(d.size(), 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < anchors.size(); ++p) {
    const Interval a = anchors[p];
    if (!contributes(a, gts[p])) continue;
    const double len = a.length();
    const IouTerm term = iou_term(a.start + double(d[2 * p]) * len, a.end + double(d[2 * p + 1]) * len, gts[p]);
    total += term.loss;
    (*grads)[2 * p] = term.d_start * len;
    (*grads)[2 * p + 1] = term.d_end * len;
    ++count;
  }
  const double n = double(count);
  return delta.tape().record("iou_loss", num::Tensor<T>::scalar(count ? T(total / n) : T{0}), {delta},
                             [delta, grads, n](num::Tape<T>& t, std::size_t self) {
                               if (n == 0) return;
                               const double up = double(t.grad_span(self)[0]) / n;
                               auto acc = t.accumulator(delta.id());
                               for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += T(up * (*grads)[i]);
                             });
}

template <typename T>
Var<T> total_loss(Var<T> align, Var<T> reg, T lambda1, T lambda2) {
  if (lambda1 < T{0} || lambda2 < T{0} || (lambda1 == T{0} && lambda2 == T{0})) {
    throw ParameterError("loss weights must be non-negative and not both zero");
  }
  return num::add(num::scale(align, lambda1), num::scale(reg, lambda2));
}

#define SOONET_INSTANTIATE_LOSSES(T)                                                               \
  template Var<T> rank_loss_rows<T>(Var<T>, const num::Tensor<T>&, const Mask&, T);               \
  template Var<T> rank_loss_cols<T>(Var<T>, const num::Tensor<T>&, const Mask&, T);               \
  template Var<T> dual_rank_loss<T>(Var<T>, const num::Tensor<T>&, const Mask&, T);               \
  template Var<T> bce_loss<T>(Var<T>, const num::Tensor<T>&, const Mask&);                        \
  template Var<T> nce_loss<T>(Var<T>, const num::Tensor<T>&, const Mask&, T);                     \
  template Var<T> ranking_loss<T>(Var<T>, const num::Tensor<T>&, const Mask&, const RankLossOptions&, \
                                  double);                                                         \
  template Var<T> iou_loss<T>(Var<T>, const std::vector<Interval>&, const std::vector<Interval>&); \
  template Var<T> total_loss<T>(Var<T>, Var<T>, T, T);

SOONET_INSTANTIATE_LOSSES(float)
SOONET_INSTANTIATE_LOSSES(double)

}  // namespace soonet::loss
