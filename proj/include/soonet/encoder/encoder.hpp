#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "soonet/anchors/anchors.hpp"
#include "soonet/numerics/ops.hpp"
#include "soonet/numerics/param_store.hpp"

namespace soonet::enc {

using num::Var;

struct EncoderConfig {
  std::size_t window = 8;
  std::size_t shift = 4;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 0;  // 0 means 2·D
  num::PoolKind pool = num::PoolKind::kMax;
  double ln_eps = 1e-5;

  std::size_t hidden_for(std::size_t dim) const { return mlp_hidden ? mlp_hidden : 2 * dim; }
  void validate(std::size_t dim) const;
};

template <typename T>
struct MsaWeights {
  Var<T> qkv_w, qkv_b, out_w, out_b;
};

template <typename T>
struct NormWeights {
  Var<T> gain, bias;
};

template <typename T>
struct MlpWeights {
  Var<T> w1, b1, w2, b2;
};

/// Two pre-norm attention sublayers (plain, then shifted) each followed by a
/// pre-norm MLP sublayer.
template <typename T>
struct SwinBlockWeights {
  NormWeights<T> norm[4];
  MsaWeights<T> wmsa, swmsa;
  MlpWeights<T> mlp1, mlp2;
};

template <typename T>
struct IntraAnchorWeights {
  Var<T> pos;  // max_anchor_len × D
  NormWeights<T> norm;
  MsaWeights<T> msa;
};

// Parameter registration. Weights are drawn N(0, 1/fan_in); biases start at
// zero and norm gains at one.
void add_msa_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim,
                    std::mt19937_64& rng);
void add_norm_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim);
void add_mlp_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t in,
                    std::size_t hidden, std::size_t out, std::mt19937_64& rng);
void add_swin_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim,
                     std::size_t hidden, std::mt19937_64& rng);
void add_intra_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim,
                      std::size_t max_anchor_len, std::mt19937_64& rng);
void add_linear_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t in,
                       std::size_t out, std::mt19937_64& rng);

template <typename T> MsaWeights<T> bind_msa(const num::BoundParams<T>& p, const std::string& prefix);
template <typename T> NormWeights<T> bind_norm(const num::BoundParams<T>& p, const std::string& prefix);
template <typename T> MlpWeights<T> bind_mlp(const num::BoundParams<T>& p, const std::string& prefix);
template <typename T>
SwinBlockWeights<T> bind_swin(const num::BoundParams<T>& p, const std::string& prefix);
template <typename T>
IntraAnchorWeights<T> bind_intra(const num::BoundParams<T>& p, const std::string& prefix);

/// x · w + b
template <typename T> Var<T> affine(Var<T> x, Var<T> w, Var<T> b);

/// Window partition of the first `valid_rows` of a `rows`-long sequence after
/// a cyclic shift. Shifted position p holds original row (p + shift) mod
/// valid_rows; windows are cut additionally where the wrapped tail begins so
/// wrapped rows never attend across the seam. Rows past valid_rows are left
/// out entirely. No shift is applied when the valid part fits in one window.
num::AttentionLayout window_layout(std::size_t rows, std::size_t valid_rows, std::size_t window,
                                   std::size_t shift);

/// Layout with one attention segment per [begin[s], begin[s+1]) range.
num::AttentionLayout segment_layout(const num::SegmentOffsets& segments);

template <typename T>
Var<T> msa(Var<T> x, const MsaWeights<T>& w, std::size_t heads, const num::AttentionLayout& layout);

template <typename T>
Var<T> window_msa(Var<T> x, const MsaWeights<T>& w, const EncoderConfig& config, std::size_t shift,
                  std::size_t valid_rows);

template <typename T> Var<T> mlp(Var<T> x, const MlpWeights<T>& w);

template <typename T>
Var<T> swin_block(Var<T> z, const SwinBlockWeights<T>& w, const EncoderConfig& config,
                  std::size_t valid_rows);

/// Scale-l features E^l = pool_{r_l}(swin_block_l(E^{l-1})). A pooled row is
/// valid when at least one of its inputs is.
template <typename T>
struct MultiScale {
  std::vector<Var<T>> features;
  std::vector<std::size_t> valid_rows;
};

template <typename T>
MultiScale<T> encode_multiscale(Var<T> e0, std::size_t valid_rows, const std::vector<SwinBlockWeights<T>>& blocks,
                                const std::vector<std::size_t>& pool_factors, const EncoderConfig& config);

/// Stacked frames of several anchors with intra-anchor attention applied:
/// V̂ = MSA(LN(V + pos)) + V, each anchor attending only within itself.
template <typename T>
struct IntraAnchorOutput {
  Var<T> frames;                 // Σ frame counts × D
  num::SegmentOffsets segments;  // per anchor, into `frames`
};

template <typename T>
IntraAnchorOutput<T> intra_anchor_msa(Var<T> video, const std::vector<const anchors::Anchor*>& anchors,
                                      const IntraAnchorWeights<T>& w, const EncoderConfig& config);

}  // namespace soonet::enc
