#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "soonet/interval.hpp"
#include "soonet/numerics/tape.hpp"

namespace soonet::anchors {

/// One temporal proposal. Scales are numbered from 0 (the finest, length
/// C_1) to L-1. Frame range is half-open.
struct Anchor {
  std::size_t scale = 0;
  std::size_t index = 0;
  Interval bounds;
  std::size_t frame_lo = 0;
  std::size_t frame_hi = 0;
  /// Last anchor of a scale when N is not a multiple of its length.
  bool padded = false;

  std::size_t frame_count() const { return frame_hi - frame_lo; }
};

/// C_l = C_{l-1} · r_l for l = 1..L, starting from the base length C_0.
std::vector<std::size_t> anchor_lengths(std::size_t base_len, std::span<const std::size_t> pool_factors);

/// Multi-scale tiling of [0, N) frames. Anchors are stored scale-major; the
/// position in that order is the anchor's global index.
class AnchorGrid {
 public:
  AnchorGrid(std::size_t frames, double fps, std::size_t base_len,
             std::vector<std::size_t> pool_factors);

  std::size_t frames() const { return frames_; }
  double fps() const { return fps_; }
  double duration() const { return double(frames_) / fps_; }
  std::size_t base_len() const { return base_len_; }
  std::size_t base_count() const { return (frames_ + base_len_ - 1) / base_len_; }
  const std::vector<std::size_t>& pool_factors() const { return pool_factors_; }

  std::size_t scale_count() const { return lengths_.size(); }
  std::size_t length(std::size_t scale) const { return lengths_.at(scale); }
  const std::vector<std::size_t>& lengths() const { return lengths_; }
  std::size_t count(std::size_t scale) const { return offsets_.at(scale + 1) - offsets_.at(scale); }
  std::size_t offset(std::size_t scale) const { return offsets_.at(scale); }
  std::size_t total() const { return anchors_.size(); }

  const Anchor& at(std::size_t global) const { return anchors_.at(global); }
  const Anchor& at(std::size_t scale, std::size_t index) const;
  const std::vector<Anchor>& anchors() const { return anchors_; }

  /// (t_s, t_e) with the end clamped to the real video length.
  Interval bounds(std::size_t scale, std::size_t index) const { return at(scale, index).bounds; }

 private:
  std::size_t frames_;
  double fps_;
  std::size_t base_len_;
  std::vector<std::size_t> pool_factors_;
  std::vector<std::size_t> lengths_;
  std::vector<std::size_t> offsets_;
  std::vector<Anchor> anchors_;
};

/// |a ∩ b| / |a ∪ b|; throws UsageError for degenerate intervals.
double temporal_iou(Interval a, Interval b);

/// Non-overlapping 1-D convolution with kernel = stride = base_len. The
/// sequence is zero-padded on the right to a multiple of base_len.
/// `weight` is (base_len·D) × D with row k·D + d reading frame offset k,
/// channel d; `bias` has D entries.
template <typename T>
num::Var<T> partition_base(num::Var<T> features, std::size_t base_len, num::Var<T> weight,
                           num::Var<T> bias);

}  // namespace soonet::anchors
