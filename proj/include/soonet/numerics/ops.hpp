#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "soonet/numerics/tape.hpp"
#include "soonet/numerics/tensor.hpp"

// Differentiable primitives. Shapes must match exactly; the only broadcast is
// a trailing-axis row vector (bias / gain) applied to every row.
namespace soonet::num {

// Linear algebra
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// a · bᵀ
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T> Var<T> transpose(Var<T> a);

// Elementwise
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> x, T factor);
template <typename T> Var<T> add_scalar(Var<T> x, T offset);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
template <typename T> Var<T> log(Var<T> x);
template <typename T> Var<T> gelu(Var<T> x);

// Trailing-axis affine
template <typename T> Var<T> add_row(Var<T> x, Var<T> bias);
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps);

// Reductions
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);
template <typename T> Var<T> softmax_rows(Var<T> x);

// Structure
template <typename T> Var<T> reshape(Var<T> x, Shape shape);
template <typename T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T> Var<T> concat_cols(Var<T> a, Var<T> b);
template <typename T> Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);
/// out[i] = x[index[i]]; repeated indices accumulate on backward.
template <typename T> Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index);
/// Appends zero rows up to `rows`.
template <typename T> Var<T> pad_rows(Var<T> x, std::size_t rows);

/// x_r / (‖x_r‖ + eps)
template <typename T> Var<T> row_normalize(Var<T> x, T eps);

enum class PoolKind { kMax, kMean };

/// Pools groups of `factor` consecutive rows. Only the first `valid_rows`
/// rows participate; output has ceil(valid_rows / factor) rows.
template <typename T>
Var<T> pool_rows(Var<T> x, std::size_t factor, std::size_t valid_rows, PoolKind kind);

/// Half-open row ranges [begin[s], begin[s+1]) into `x`.
using SegmentOffsets = std::vector<std::size_t>;

/// Mean of the rows of each segment: (#segments × cols).
template <typename T> Var<T> segment_mean_rows(Var<T> x, const SegmentOffsets& segments);

/// Per segment: softmax over `logits` (rows × 1) restricted to the segment,
/// then the weighted sum of the segment's rows of `values`.
template <typename T>
Var<T> segment_softmax_pool(Var<T> values, Var<T> logits, const SegmentOffsets& segments);

/// Which input rows attend to which. Attention position p reads input row
/// order[p]; positions in one segment [begin[s], begin[s+1]) attend only to
/// each other. Input rows not listed produce zero output rows.
struct AttentionLayout {
  std::size_t rows = 0;
  std::vector<std::size_t> order;
  SegmentOffsets segments;
};

/// Scaled dot-product multi-head attention over a packed projection
/// `qkv` = [Q | K | V] (rows × 3D). Returns rows × D.
template <typename T>
Var<T> multihead_attention(Var<T> qkv, std::size_t heads, const AttentionLayout& layout);

/// Throws NumericError if any element is NaN or infinite.
template <typename T> void require_finite(std::span<const T> values, const char* where);

}  // namespace soonet::num
