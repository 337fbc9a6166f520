#include "soonet/ranking/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "soonet/errors.hpp"

namespace soonet::rank {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T>
double norm(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

bool ranks_before(double sa, const anchors::Anchor& a, double sb, const anchors::Anchor& b) {
  if (sa != sb) return sa > sb;
  if (a.bounds.start != b.bounds.start) return a.bounds.start < b.bounds.start;
  if (a.scale != b.scale) return a.scale < b.scale;
  return a.index < b.index;
}

}  // namespace

template <typename T>
std::vector<double> context_scores(const num::Tensor<T>& anchor_features, std::span<const T> query) {
  if (anchor_features.cols() != query.size()) {
    throw DimensionError("context_scores: anchor features have D=" + std::to_string(anchor_features.cols()) +
                         ", query has " + std::to_string(query.size()));
  }
  const double qn = norm(query);
  if (qn == 0.0) throw NumericError("context_scores: zero query vector");
  std::vector<double> out(anchor_features.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto e = anchor_features.row(i);
    out[i] = sigmoid(dot(e, query) / (norm(e) * qn + kCosineEps));
  }
  return out;
}

std::vector<std::size_t> coarse_rank(std::span<const double> scores, const anchors::AnchorGrid& grid) {
  if (scores.size() != grid.total()) throw DimensionError("coarse_rank: one score per anchor expected");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], grid.at(a), scores[b], grid.at(b));
  });
  return order;
}

std::vector<std::size_t> rank_subset(std::span<const double> scores, std::span<const std::size_t> subset,
                                     const anchors::AnchorGrid& grid) {
  if (scores.size() != subset.size()) throw DimensionError("rank_subset: one score per subset anchor expected");
  std::vector<std::size_t> order(subset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], grid.at(subset[a]), scores[b], grid.at(subset[b]));
  });
  return order;
}

std::vector<std::size_t> select_topm(std::span<const double> scores, const anchors::AnchorGrid& grid,
                                     std::size_t m) {
  if (m == 0) throw ParameterError("m must be >= 1");
  if (scores.size() != grid.total()) throw DimensionError("select_topm: one score per anchor expected");
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < grid.scale_count(); ++l) {
    std::vector<std::size_t> idx(grid.count(l));
    std::iota(idx.begin(), idx.end(), grid.offset(l));
    const std::size_t k = std::min(m, idx.size());
    auto before = [&](std::size_t a, std::size_t b) {
      return ranks_before(scores[a], grid.at(a), scores[b], grid.at(b));
    };
    std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(k), idx.end(), before);
    out.insert(out.end(), idx.begin(), idx.begin() + std::ptrdiff_t(k));
  }
  return out;
}

template <typename T>
std::vector<double> content_scores(const num::Tensor<T>& frames, const num::SegmentOffsets& segments,
                                   std::span<const T> query) {
  if (frames.cols() != query.size()) throw DimensionError("content_scores: dimension mismatch");
  if (segments.size() < 2) throw UsageError("content_scores: empty subset");
  const double qn = norm(query);
  if (qn == 0.0) throw NumericError("content_scores: zero query vector");
  std::vector<double> out(segments.size() - 1);
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    const std::size_t lo = segments[s], hi = segments[s + 1];
    if (hi <= lo) throw UsageError("content_scores: anchor without frames");
    double acc = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const auto v = frames.row(k);
      acc += dot(v, query) / (norm(v) * qn + kCosineEps);
    }
    out[s] = sigmoid(acc / double(hi - lo));
  }
  return out;
}

std::vector<double> rerank(std::span<const double> ctx_subset, std::span<const double> ctn) {
  if (ctx_subset.size() != ctn.size()) throw DimensionError("rerank: score lists differ in length");
  std::vector<double> out(ctn.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ctx_subset[i] + ctn[i];
  return out;
}

template std::vector<double> context_scores<float>(const num::Tensor<float>&, std::span<const float>);
template std::vector<double> context_scores<double>(const num::Tensor<double>&, std::span<const double>);
template std::vector<double> content_scores<float>(const num::Tensor<float>&, const num::SegmentOffsets&,
                                                   std::span<const float>);
template std::vector<double> content_scores<double>(const num::Tensor<double>&, const num::SegmentOffsets&,
                                                    std::span<const double>);

}  // namespace soonet::rank
