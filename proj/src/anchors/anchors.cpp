#include "soonet/anchors/anchors.hpp"

#include <algorithm>
#include <string>

#include "soonet/errors.hpp"
#include "soonet/numerics/ops.hpp"

namespace soonet::anchors {

std::vector<std::size_t> anchor_lengths(std::size_t base_len, std::span<const std::size_t> pool_factors) {
  if (base_len == 0) throw ParameterError("base anchor length must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(pool_factors.size());
  std::size_t len = base_len;
  for (std::size_t r : pool_factors) {
    if (r == 0) throw ParameterError("pooling factors must be >= 1");
    len *= r;
    out.push_back(len);
  }
  return out;
}

AnchorGrid::AnchorGrid(std::size_t frames, double fps, std::size_t base_len,
                       std::vector<std::size_t> pool_factors)
    : frames_(frames), fps_(fps), base_len_(base_len), pool_factors_(std::move(pool_factors)) {
  if (frames_ == 0) throw UsageError("anchor grid needs at least one frame");
  if (!(fps_ > 0.0)) throw ParameterError("fps must be positive");
  if (pool_factors_.empty()) throw ParameterError("at least one scale is required");
  lengths_ = anchor_lengths(base_len_, pool_factors_);
  offsets_.push_back(0);
  for (std::size_t s = 0; s < lengths_.size(); ++s) {
    const std::size_t len = lengths_[s];
    const std::size_t n = (frames_ + len - 1) / len;
    for (std::size_t i = 0; i < n; ++i) {
      Anchor a;
      a.scale = s;
      a.index = i;
      a.frame_lo = i * len;
      a.frame_hi = std::min((i + 1) * len, frames_);
      a.padded = a.frame_hi - a.frame_lo < len;
      a.bounds = Interval{double(a.frame_lo) / fps_, double(a.frame_hi) / fps_};
      anchors_.push_back(a);
    }
    offsets_.push_back(anchors_.size());
  }
}

const Anchor& AnchorGrid::at(std::size_t scale, std::size_t index) const {
  if (scale >= scale_count() || index >= count(scale)) {
    throw UsageError("anchor (" + std::to_string(scale) + ", " + std::to_string(index) +
                     ") is outside the grid");
  }
  return anchors_[offsets_[scale] + index];
}

double temporal_iou(Interval a, Interval b) {
  if (!(a.start < a.end) || !(b.start < b.end)) throw UsageError("temporal_iou: degenerate interval");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

template <typename T>
num::Var<T> partition_base(num::Var<T> features, std::size_t base_len, num::Var<T> weight,
                           num::Var<T> bias) {
  if (base_len == 0) throw ParameterError("base anchor length must be >= 1");
  const std::size_t n = features.rows(), d = features.cols();
  if (n == 0) throw UsageError("partition_base: empty feature sequence");
  const std::size_t count = (n + base_len - 1) / base_len;
  auto padded = count * base_len == n ? features : num::pad_rows(features, count * base_len);
  auto windows = num::reshape(padded, num::Shape{count, base_len * d});
  return num::add_row(num::matmul(windows, weight), bias);
}

template num::Var<float> partition_base<float>(num::Var<float>, std::size_t, num::Var<float>, num::Var<float>);
template num::Var<double> partition_base<double>(num::Var<double>, std::size_t, num::Var<double>,
                                                 num::Var<double>);

}  // namespace soonet::anchors
