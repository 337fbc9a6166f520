#include "soonet/encoder/encoder.hpp"

#include <cmath>
#include <numeric>

#include "soonet/errors.hpp"

namespace soonet::enc {
namespace {

num::Tensor<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(rows)));
  auto t = num::Tensor<double>::matrix(rows, cols);
  for (auto& x : t.mutable_data()) x = normal(rng);
  return t;
}

num::Tensor<double> zeros(std::size_t n) { return num::Tensor<double>(num::Shape{n}, 0.0); }

}  // namespace

void EncoderConfig::validate(std::size_t dim) const {
  if (window == 0) throw ParameterError("window size must be >= 1");
  if (shift >= window) throw ParameterError("shift must be smaller than the window size");
  if (heads == 0 || dim % heads != 0) {
    throw ParameterError(std::to_string(heads) + " heads do not divide D=" + std::to_string(dim));
  }
  if (!(ln_eps > 0.0)) throw ParameterError("layer-norm eps must be positive");
}

void add_linear_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t in,
                       std::size_t out, std::mt19937_64& rng) {
  store.add(prefix + ".w", random_matrix(in, out, rng));
  store.add(prefix + ".b", zeros(out));
}

void add_msa_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim,
                    std::mt19937_64& rng) {
  add_linear_params(store, prefix + ".qkv", dim, 3 * dim, rng);
  add_linear_params(store, prefix + ".out", dim, dim, rng);
}

void add_norm_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim) {
  store.add(prefix + ".g", num::Tensor<double>(num::Shape{dim}, 1.0));
  store.add(prefix + ".b", zeros(dim));
}

void add_mlp_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t in,
                    std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  add_linear_params(store, prefix + ".fc1", in, hidden, rng);
  add_linear_params(store, prefix + ".fc2", hidden, out, rng);
}

void add_swin_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim,
                     std::size_t hidden, std::mt19937_64& rng) {
  for (int k = 0; k < 4; ++k) add_norm_params(store, prefix + ".ln" + std::to_string(k), dim);
  add_msa_params(store, prefix + ".wmsa", dim, rng);
  add_mlp_params(store, prefix + ".mlp1", dim, hidden, dim, rng);
  add_msa_params(store, prefix + ".swmsa", dim, rng);
  add_mlp_params(store, prefix + ".mlp2", dim, hidden, dim, rng);
}

void add_intra_params(num::ParamStore<double>& store, const std::string& prefix, std::size_t dim,
                      std::size_t max_anchor_len, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.02);
  auto pos = num::Tensor<double>::matrix(max_anchor_len, dim);
  for (auto& x : pos.mutable_data()) x = normal(rng);
  store.add(prefix + ".pos", std::move(pos));
  add_norm_params(store, prefix + ".ln", dim);
  add_msa_params(store, prefix + ".msa", dim, rng);
}

template <typename T>
MsaWeights<T> bind_msa(const num::BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + ".qkv.w"], p[prefix + ".qkv.b"], p[prefix + ".out.w"], p[prefix + ".out.b"]};
}

template <typename T>
NormWeights<T> bind_norm(const num::BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + ".g"], p[prefix + ".b"]};
}

template <typename T>
MlpWeights<T> bind_mlp(const num::BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + ".fc1.w"], p[prefix + ".fc1.b"], p[prefix + ".fc2.w"], p[prefix + ".fc2.b"]};
}

template <typename T>
SwinBlockWeights<T> bind_swin(const num::BoundParams<T>& p, const std::string& prefix) {
  SwinBlockWeights<T> w;
  for (int k = 0; k < 4; ++k) w.norm[k] = bind_norm(p, prefix + ".ln" + std::to_string(k));
  w.wmsa = bind_msa(p, prefix + ".wmsa");
  w.mlp1 = bind_mlp(p, prefix + ".mlp1");
  w.swmsa = bind_msa(p, prefix + ".swmsa");
  w.mlp2 = bind_mlp(p, prefix + ".mlp2");
  return w;
}

template <typename T>
IntraAnchorWeights<T> bind_intra(const num::BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + ".pos"], bind_norm(p, prefix + ".ln"), bind_msa(p, prefix + ".msa")};
}

template <typename T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  return num::add_row(num::matmul(x, w), b);
}

num::AttentionLayout window_layout(std::size_t rows, std::size_t valid_rows, std::size_t window,
                                   std::size_t shift) {
  if (window == 0) throw ParameterError("window size must be >= 1");
  if (valid_rows > rows) throw DimensionError("window layout: more valid rows than rows");
  num::AttentionLayout layout;
  layout.rows = rows;
  layout.order.resize(valid_rows);
  const std::size_t s = valid_rows > window ? shift % valid_rows : 0;
  for (std::size_t p = 0; p < valid_rows; ++p) layout.order[p] = (p + s) % valid_rows;
  // The rows that wrapped around start at valid_rows - s.
  const std::size_t seam = s ? valid_rows - s : valid_rows;
  layout.segments.push_back(0);
  for (std::size_t begin = 0; begin < valid_rows; begin += window) {
    const std::size_t end = std::min(begin + window, valid_rows);
    if (seam > begin && seam < end) layout.segments.push_back(seam);
    layout.segments.push_back(end);
  }
  return layout;
}

num::AttentionLayout segment_layout(const num::SegmentOffsets& segments) {
  if (segments.empty()) throw DimensionError("segment layout needs at least one offset");
  num::AttentionLayout layout;
  layout.rows = segments.back();
  layout.order.resize(layout.rows);
  std::iota(layout.order.begin(), layout.order.end(), std::size_t{0});
  layout.segments = segments;
  return layout;
}

template <typename T>
Var<T> msa(Var<T> x, const MsaWeights<T>& w, std::size_t heads, const num::AttentionLayout& layout) {
  auto qkv = affine(x, w.qkv_w, w.qkv_b);
  return affine(num::multihead_attention(qkv, heads, layout), w.out_w, w.out_b);
}

template <typename T>
Var<T> window_msa(Var<T> x, const MsaWeights<T>& w, const EncoderConfig& config, std::size_t shift,
                  std::size_t valid_rows) {
  return msa(x, w, config.heads, window_layout(x.rows(), valid_rows, config.window, shift));
}

template <typename T>
Var<T> mlp(Var<T> x, const MlpWeights<T>& w) {
  return affine(num::gelu(affine(x, w.w1, w.b1)), w.w2, w.b2);
}

template <typename T>
Var<T> swin_block(Var<T> z, const SwinBlockWeights<T>& w, const EncoderConfig& config,
                  std::size_t valid_rows) {
  const T eps = T(config.ln_eps);
  auto ln = [&](Var<T> x, int k) { return num::layer_norm(x, w.norm[k].gain, w.norm[k].bias, eps); };
  auto z1 = num::add(z, window_msa(ln(z, 0), w.wmsa, config, 0, valid_rows));
  auto z2 = num::add(z1, mlp(ln(z1, 1), w.mlp1));
  auto z3 = num::add(z2, window_msa(ln(z2, 2), w.swmsa, config, config.shift, valid_rows));
  return num::add(z3, mlp(ln(z3, 3), w.mlp2));
}

template <typename T>
MultiScale<T> encode_multiscale(Var<T> e0, std::size_t valid_rows, const std::vector<SwinBlockWeights<T>>& blocks,
                                const std::vector<std::size_t>& pool_factors, const EncoderConfig& config) {
  if (blocks.size() != pool_factors.size()) {
    throw DimensionError("encode_multiscale: " + std::to_string(blocks.size()) + " blocks for " +
                         std::to_string(pool_factors.size()) + " scales");
  }
  MultiScale<T> out;
  Var<T> e = e0;
  std::size_t valid = valid_rows;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::size_t r = pool_factors[l];
    if (r == 0) throw ParameterError("pooling factors must be >= 1");
    e = swin_block(e, blocks[l], config, valid);
    if (r > 1 || valid != e.rows()) {
      e = num::pool_rows(e, r, valid, config.pool);
      valid = e.rows();
    }
    out.features.push_back(e);
    out.valid_rows.push_back(valid);
  }
  return out;
}

template <typename T>
IntraAnchorOutput<T> intra_anchor_msa(Var<T> video, const std::vector<const anchors::Anchor*>& anchors,
                                      const IntraAnchorWeights<T>& w, const EncoderConfig& config) {
  IntraAnchorOutput<T> out;
  out.segments.push_back(0);
  std::vector<std::size_t> frames, positions;
  const std::size_t max_len = w.pos.rows();
  for (const auto* a : anchors) {
    if (a->frame_count() > max_len) {
      throw ParameterError("anchor of " + std::to_string(a->frame_count()) +
                           " frames exceeds the positional table (" + std::to_string(max_len) + ")");
    }
    for (std::size_t k = a->frame_lo; k < a->frame_hi; ++k) {
      frames.push_back(k);
      positions.push_back(k - a->frame_lo);
    }
    out.segments.push_back(frames.size());
  }
  if (frames.empty()) throw UsageError("intra_anchor_msa: no frames to attend over");
  auto v = num::gather_rows(video, std::span<const std::size_t>(frames));
  auto pos = num::gather_rows(w.pos, std::span<const std::size_t>(positions));
  auto normed = num::layer_norm(num::add(v, pos), w.norm.gain, w.norm.bias, T(config.ln_eps));
  out.frames = num::add(msa(normed, w.msa, config.heads, segment_layout(out.segments)), v);
  return out;
}

#define SOONET_INSTANTIATE_ENCODER(T)                                                                 \
  template MsaWeights<T> bind_msa<T>(const num::BoundParams<T>&, const std::string&);                \
  template NormWeights<T> bind_norm<T>(const num::BoundParams<T>&, const std::string&);              \
  template MlpWeights<T> bind_mlp<T>(const num::BoundParams<T>&, const std::string&);                \
  template SwinBlockWeights<T> bind_swin<T>(const num::BoundParams<T>&, const std::string&);         \
  template IntraAnchorWeights<T> bind_intra<T>(const num::BoundParams<T>&, const std::string&);      \
  template Var<T> affine<T>(Var<T>, Var<T>, Var<T>);                                                  \
  template Var<T> msa<T>(Var<T>, const MsaWeights<T>&, std::size_t, const num::AttentionLayout&);     \
  template Var<T> window_msa<T>(Var<T>, const MsaWeights<T>&, const EncoderConfig&, std::size_t,      \
                                std::size_t);                                                         \
  template Var<T> mlp<T>(Var<T>, const MlpWeights<T>&);                                               \
  template Var<T> swin_block<T>(Var<T>, const SwinBlockWeights<T>&, const EncoderConfig&, std::size_t); \
  template MultiScale<T> encode_multiscale<T>(Var<T>, std::size_t, const std::vector<SwinBlockWeights<T>>&, \
                                              const std::vector<std::size_t>&, const EncoderConfig&); \
  template IntraAnchorOutput<T> intra_anchor_msa<T>(Var<T>, const std::vector<const anchors::Anchor*>&, \
                                                    const IntraAnchorWeights<T>&, const EncoderConfig&);

SOONET_INSTANTIATE_ENCODER(float)
SOONET_INSTANTIATE_ENCODER(double)

}  // namespace soonet::enc
