#include "soonet/model/model.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "soonet/errors.hpp"
#include "soonet/io/binary.hpp"
#include "soonet/numerics/ops.hpp"
#include "soonet/ranking/ranking.hpp"
#include "soonet/regression/regression.hpp"

namespace soonet::model {
namespace {

std::string block_name(std::size_t l) { return "enc" + std::to_string(l); }
std::string regressor_name(std::size_t l) { return "reg" + std::to_string(l) + ".mlp"; }

// Residual branches start this much smaller than a plain N(0, 1/fan_in) draw.
constexpr double kInitNoise = 0.1;

}  // namespace

std::size_t ModelConfig::max_anchor_len() const {
  const auto lengths = anchors::anchor_lengths(base_len, pool_factors);
  return lengths.empty() ? base_len : *std::max_element(lengths.begin(), lengths.end());
}

void ModelConfig::validate() const {
  if (dim == 0) throw ParameterError("dim must be >= 1");
  if (base_len == 0) throw ParameterError("base_len must be >= 1");
  if (pool_factors.empty()) throw ParameterError("at least one scale is required");
  anchors::anchor_lengths(base_len, pool_factors);
  encoder.validate(dim);
  if (m == 0) throw ParameterError("m must be >= 1");
  if (n == 0) throw ParameterError("n must be >= 1");
  if (!(alpha_ctx > 0.0) || !(alpha_ctn > 0.0)) throw ParameterError("rank temperatures must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0 || (lambda1 == 0.0 && lambda2 == 0.0)) {
    throw ParameterError("loss weights must be non-negative and not both zero");
  }
  if (!(loss.nce_tau > 0.0)) throw ParameterError("nce temperature must be positive");
  if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0)) throw ParameterError("NMS threshold must lie in [0, 1]");
}

num::ParamStore<double> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.dim;
  num::ParamStore<double> store;
  enc::add_linear_params(store, "conv", config.base_len * d, d, rng);
  // The base convolution starts as a frame average (plus the random draw,
  // shrunk) so anchor features begin in the query embedding space.
  auto& conv = store.mutable_at("conv.w");
  for (auto& x : conv.mutable_data()) x *= kInitNoise;
  for (std::size_t k = 0; k < config.base_len; ++k) {
    for (std::size_t c = 0; c < d; ++c) conv.at(k * d + c, c) += 1.0 / double(config.base_len);
  }
  for (std::size_t l = 0; l < config.scales(); ++l) {
    enc::add_swin_params(store, block_name(l), d, config.encoder.hidden_for(d), rng);
    for (const char* branch : {".wmsa.out.w", ".mlp1.fc2.w", ".swmsa.out.w", ".mlp2.fc2.w"}) {
      for (auto& x : store.mutable_at(block_name(l) + branch).mutable_data()) x *= kInitNoise;
    }
  }
  enc::add_intra_params(store, "intra", d, config.max_anchor_len(), rng);
  for (auto& x : store.mutable_at("intra.msa.out.w").mutable_data()) x *= kInitNoise;
  std::normal_distribution<double> small(0.0, 1.0 / std::sqrt(double(d)));
  auto att = num::Tensor<double>::matrix(1, d);
  for (auto& x : att.mutable_data()) x = small(rng);
  store.add("reg.att.w", std::move(att));
  const std::size_t heads = config.per_scale_regressor ? config.scales() : 1;
  for (std::size_t l = 0; l < heads; ++l) {
    const std::string prefix = config.per_scale_regressor ? regressor_name(l) : "reg.mlp";
    enc::add_mlp_params(store, prefix, 2 * d, 2 * d, 2, rng);
    // Start close to δ = 0 so early predictions stay on the anchor grid.
    for (auto& x : store.mutable_at(prefix + ".fc2.w").mutable_data()) x *= kInitNoise;
  }
  return store;
}

bool is_regressor_param(const std::string& name) { return name.rfind("reg", 0) == 0; }

template <typename T>
Weights<T> bind_weights(const num::BoundParams<T>& params, const ModelConfig& config) {
  Weights<T> w;
  w.conv_w = params["conv.w"];
  w.conv_b = params["conv.b"];
  for (std::size_t l = 0; l < config.scales(); ++l) w.blocks.push_back(enc::bind_swin(params, block_name(l)));
  w.intra = enc::bind_intra(params, "intra");
  w.att_w = params["reg.att.w"];
  if (config.per_scale_regressor) {
    for (std::size_t l = 0; l < config.scales(); ++l) w.regressors.push_back(enc::bind_mlp(params, regressor_name(l)));
  } else {
    w.regressors.push_back(enc::bind_mlp(params, "reg.mlp"));
  }
  return w;
}

template <typename T>
Var<T> encode_anchors(Var<T> video, const Weights<T>& w, const ModelConfig& config) {
  auto e0 = anchors::partition_base(video, config.base_len, w.conv_w, w.conv_b);
  auto scales = enc::encode_multiscale(e0, e0.rows(), w.blocks, config.pool_factors, config.encoder);
  return num::concat_rows(std::span<const Var<T>>(scales.features));
}

template <typename T>
TrainingForward<T> training_forward(num::Tape<T>& tape, const num::BoundParams<T>& params,
                                    const ModelConfig& config, const data::Batch& batch) {
  if (!batch.video || batch.queries.empty()) throw UsageError("training_forward: empty batch");
  const auto& video = *batch.video;
  if (video.dim() != config.dim) {
    throw UsageError("video has D=" + std::to_string(video.dim()) + " but the model expects D=" +
                     std::to_string(config.dim));
  }
  const Weights<T> w = bind_weights(params, config);
  const anchors::AnchorGrid grid(video.frames(), video.fps, config.base_len, config.pool_factors);
  const std::size_t nq = batch.queries.size(), na = grid.total(), d = config.dim;
  const T eps = T(rank::kCosineEps);

  auto v = tape.constant(video.features.template cast<T>());
  auto e = encode_anchors(v, w, config);
  if (e.rows() != na) throw DimensionError("encoder produced a different anchor count than the grid");

  auto qmat = num::Tensor<T>::matrix(nq, d);
  std::vector<Interval> gts(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const auto& a = batch.queries[q];
    if (a.query_vec.size() != d) throw UsageError("query " + a.query_id + " has the wrong dimension");
    for (std::size_t c = 0; c < d; ++c) qmat.at(q, c) = T(a.query_vec[c]);
    gts[q] = a.span;
  }
  auto qv = tape.constant(qmat);
  auto qn = num::row_normalize(qv, eps);
  auto s_ctx = num::sigmoid(num::matmul_nt(qn, num::row_normalize(e, eps)));

  auto labels = num::Tensor<T>::matrix(nq, na);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t i = 0; i < na; ++i) labels.at(q, i) = T(anchors::temporal_iou(grid.at(i).bounds, gts[q]));
  }

  TrainingForward<T> out;
  auto l_ctx = loss::ranking_loss(s_ctx, labels, {}, config.loss, config.alpha_ctx);
  out.parts.ctx = double(l_ctx.value().item());
  Var<T> align = l_ctx;

  Var<T> reg;
  if (config.use_rr || config.use_br) {
    // Per-query subsets from the current context scores, and their union.
    std::vector<std::vector<std::size_t>> subsets(nq);
    std::vector<std::size_t> union_ids;
    for (std::size_t q = 0; q < nq; ++q) {
      const auto row = s_ctx.value().row(q);
      std::vector<double> scores(row.begin(), row.end());
      subsets[q] = rank::select_topm(scores, grid, config.m);
      union_ids.insert(union_ids.end(), subsets[q].begin(), subsets[q].end());
    }
    std::sort(union_ids.begin(), union_ids.end());
    union_ids.erase(std::unique(union_ids.begin(), union_ids.end()), union_ids.end());
    std::map<std::size_t, std::size_t> column;
    std::vector<const anchors::Anchor*> union_anchors;
    for (std::size_t u = 0; u < union_ids.size(); ++u) {
      column[union_ids[u]] = u;
      union_anchors.push_back(&grid.at(union_ids[u]));
    }
    auto intra = enc::intra_anchor_msa(v, union_anchors, w.intra, config.encoder);

    if (config.use_rr) {
      const std::size_t nu = union_ids.size();
      auto cos = num::matmul_nt(num::row_normalize(intra.frames, eps), qn);
      auto s_ctn = num::sigmoid(num::transpose(num::segment_mean_rows(cos, intra.segments)));
      loss::Mask mask(nq * nu, 0);
      auto sub_labels = num::Tensor<T>::matrix(nq, nu);
      for (std::size_t q = 0; q < nq; ++q) {
        for (std::size_t a : subsets[q]) mask[q * nu + column[a]] = 1;
        for (std::size_t u = 0; u < nu; ++u) sub_labels.at(q, u) = labels(q, union_ids[u]);
      }
      auto l_ctn = loss::ranking_loss(s_ctn, sub_labels, mask, config.loss, config.alpha_ctn);
      out.parts.ctn = double(l_ctn.value().item());
      align = num::add(align, l_ctn);
    }

    if (config.use_br) {
      auto pooled = reg::attentive_pool(intra.frames, w.att_w, intra.segments);
      // Pairs grouped by scale so per-scale heads see contiguous rows.
      std::vector<Var<T>> deltas;
      std::vector<Interval> pair_anchors, pair_gts;
      for (std::size_t l = 0; l < grid.scale_count(); ++l) {
        std::vector<std::size_t> a_idx, u_idx, q_idx;
        for (std::size_t q = 0; q < nq; ++q) {
          for (std::size_t a : subsets[q]) {
            if (grid.at(a).scale != l) continue;
            a_idx.push_back(a);
            u_idx.push_back(column[a]);
            q_idx.push_back(q);
            pair_anchors.push_back(grid.at(a).bounds);
            pair_gts.push_back(gts[q]);
          }
        }
        if (a_idx.empty()) continue;
        // The regressor reads context features without writing back into them.
        auto e_src = config.detach_regression_context ? tape.constant(e.value()) : e;
        auto ep = num::gather_rows(e_src, std::span<const std::size_t>(a_idx));
        auto pp = num::gather_rows(pooled, std::span<const std::size_t>(u_idx));
        auto qp = num::gather_rows(qv, std::span<const std::size_t>(q_idx));
        deltas.push_back(reg::predict_bias(ep, pp, qp, w.regressor(l)));
      }
      auto delta = deltas.size() == 1 ? deltas[0] : num::concat_rows(std::span<const Var<T>>(deltas));
      reg = loss::iou_loss(delta, pair_anchors, pair_gts);
      out.parts.reg = double(reg.value().item());
    }
  }

  out.parts.align = out.parts.ctx + out.parts.ctn;
  if (reg.valid()) {
    out.total = loss::total_loss(align, reg, T(config.lambda1), T(config.lambda2));
  } else {
    out.total = num::scale(align, T(config.lambda1));
  }
  out.parts.total = double(out.total.value().item());
  return out;
}

template <typename T>
EncodedVideo<T> encode_video(const num::ParamStore<T>& params, const ModelConfig& config,
                             num::Tensor<T> video, double fps) {
  anchors::AnchorGrid grid(video.rows(), fps, config.base_len, config.pool_factors);
  return encode_video(params, config, std::move(grid), std::move(video));
}

template <typename T>
EncodedVideo<T> encode_video(const num::ParamStore<T>& params, const ModelConfig& config,
                             anchors::AnchorGrid grid, num::Tensor<T> video) {
  if (video.cols() != config.dim) {
    throw UsageError("video has D=" + std::to_string(video.cols()) + " but the model expects D=" +
                     std::to_string(config.dim));
  }
  if (grid.frames() != video.rows() || grid.base_len() != config.base_len) {
    throw UsageError("anchor grid does not match the video and model");
  }
  num::Tape<T> tape;
  const num::BoundParams<T> bound(tape, params, false);
  const Weights<T> w = bind_weights(bound, config);
  auto e = encode_anchors(tape.constant(video), w, config);
  return EncodedVideo<T>{std::move(grid), std::move(video), e.value()};
}

template <typename T>
std::vector<Prediction> score_query(const EncodedVideo<T>& ev, const num::ParamStore<T>& params,
                                    const ModelConfig& config, std::span<const T> query) {
  const auto& grid = ev.grid;
  const auto ctx = rank::context_scores(ev.anchor_features, query);
  std::vector<Prediction> out;
  if (!config.use_rr && !config.use_br) {
    for (std::size_t i : rank::coarse_rank(ctx, grid)) out.push_back({grid.at(i).bounds, ctx[i], i});
    return out;
  }

  const auto subset = rank::select_topm(ctx, grid, config.m);
  std::vector<double> score(subset.size());
  for (std::size_t k = 0; k < subset.size(); ++k) score[k] = ctx[subset[k]];

  // Gather only the subset's frames so the tape never holds the whole video.
  std::vector<anchors::Anchor> local;
  std::size_t total = 0;
  for (std::size_t a : subset) total += grid.at(a).frame_count();
  const std::size_t d = config.dim;
  num::Tensor<T> frames = num::Tensor<T>::matrix(total, d);
  std::size_t row = 0;
  for (std::size_t a : subset) {
    anchors::Anchor copy = grid.at(a);
    const auto src = ev.video.data().subspan(copy.frame_lo * d, copy.frame_count() * d);
    std::copy(src.begin(), src.end(), frames.mutable_data().begin() + std::ptrdiff_t(row * d));
    copy.frame_lo = row;
    copy.frame_hi = row + grid.at(a).frame_count();
    row = copy.frame_hi;
    local.push_back(copy);
  }
  std::vector<const anchors::Anchor*> ptrs;
  for (const auto& a : local) ptrs.push_back(&a);

  num::Tape<T> tape;
  const num::BoundParams<T> bound(tape, params, false);
  const Weights<T> w = bind_weights(bound, config);
  auto intra = enc::intra_anchor_msa(tape.constant(std::move(frames)), ptrs, w.intra, config.encoder);

  if (config.use_rr) score = rank::rerank(score, rank::content_scores(intra.frames.value(), intra.segments, query));

  std::vector<Interval> spans(subset.size());
  for (std::size_t k = 0; k < subset.size(); ++k) spans[k] = grid.at(subset[k]).bounds;
  if (config.use_br) {
    auto pooled = reg::attentive_pool(intra.frames, w.att_w, intra.segments);
    auto qrow = num::Tensor<T>::matrix(1, d);
    std::copy(query.begin(), query.end(), qrow.mutable_data().begin());
    auto qv = tape.constant(std::move(qrow));
    for (std::size_t l = 0; l < grid.scale_count(); ++l) {
      std::vector<std::size_t> pos, a_idx;
      for (std::size_t k = 0; k < subset.size(); ++k) {
        if (grid.at(subset[k]).scale == l) {
          pos.push_back(k);
          a_idx.push_back(subset[k]);
        }
      }
      if (pos.empty()) continue;
      const std::vector<std::size_t> q_idx(pos.size(), 0);
      num::Tensor<T> rows = num::Tensor<T>::matrix(pos.size(), d);
      for (std::size_t r = 0; r < pos.size(); ++r) {
        const auto src = ev.anchor_features.row(a_idx[r]);
        std::copy(src.begin(), src.end(), rows.mutable_row(r).begin());
      }
      auto ep = tape.constant(std::move(rows));
      auto pp = num::gather_rows(pooled, std::span<const std::size_t>(pos));
      auto qp = num::gather_rows(qv, std::span<const std::size_t>(q_idx));
      const auto delta = reg::predict_bias(ep, pp, qp, w.regressor(l)).value();
      for (std::size_t r = 0; r < pos.size(); ++r) {
        spans[pos[r]] = reg::adjust_bounds(spans[pos[r]], double(delta(r, 0)), double(delta(r, 1)),
                                           grid.duration());
      }
    }
  }

  for (std::size_t k : rank::rank_subset(score, subset, grid)) out.push_back({spans[k], score[k], subset[k]});
  return out;
}

template <typename T>
std::vector<Prediction> predict(const num::ParamStore<T>& params, const ModelConfig& config,
                                const data::VideoFeatures& video, std::span<const double> query) {
  const auto ev = encode_video(params, config, video.features.template cast<T>(), video.fps);
  std::vector<T> q(query.begin(), query.end());
  return reg::top_n(score_query(ev, params, config, std::span<const T>(q)), config.n, config.nms,
                    config.nms_threshold);
}

namespace {

template <typename T>
eval::EvalResult evaluate_as(const num::ParamStore<double>& params64, const ModelConfig& config,
                             const data::Dataset& dataset, const EvalOptions& options) {
  const auto params = params64.cast<T>();
  const std::size_t max_n = options.ns.empty() ? 1 : *std::max_element(options.ns.begin(), options.ns.end());
  std::vector<std::vector<Prediction>> predictions;
  std::vector<Interval> gts;
  for (const auto& video : dataset.videos) {
    const auto& queries = dataset.queries_of(video.video_id);
    if (queries.empty()) continue;
    const auto ev = encode_video(params, config, video.features.template cast<T>(), video.fps);
    std::vector<std::vector<Prediction>> local(queries.size());
#pragma omp parallel for schedule(dynamic) num_threads(options.threads) if (options.threads > 1)
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const std::vector<T> qv(queries[q].query_vec.begin(), queries[q].query_vec.end());
      local[q] = reg::top_n(score_query(ev, params, config, std::span<const T>(qv)), max_n, config.nms,
                            config.nms_threshold);
    }
    for (std::size_t q = 0; q < queries.size(); ++q) {
      predictions.push_back(std::move(local[q]));
      gts.push_back(queries[q].span);
    }
  }
  return eval::recall_at(predictions, gts, options.ns, options.ms);
}

}  // namespace

eval::EvalResult evaluate(const num::ParamStore<double>& params, const ModelConfig& config,
                          const data::Dataset& dataset, const EvalOptions& options) {
  config.validate();
  if (options.threads < 1) throw ParameterError("threads must be >= 1");
  if (options.use_f32) return evaluate_as<float>(params, config, dataset, options);
  return evaluate_as<double>(params, config, dataset, options);
}

// ---- checkpoints ----

namespace {

void put_store(io::ByteWriter& w, const num::ParamStore<double>& store) {
  w.put(static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store.tensor(i);
    w.put_string(store.name(i));
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.put(static_cast<std::uint64_t>(e));
    for (double x : t.data()) w.put(x);
  }
}

num::ParamStore<double> get_store(io::ByteReader& r) {
  num::ParamStore<double> store;
  const auto count = r.get<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string("parameter name");
    const auto rank = r.get<std::uint32_t>("parameter rank");
    if (rank > 8) throw FormatError("parameter '" + name + "' has implausible rank " + std::to_string(rank), r.position() - 4);
    num::Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint64_t>("parameter extent");
    const std::size_t n = num::element_count(shape);
    r.require(n * sizeof(double), "parameter payload");
    std::vector<double> data(n);
    for (auto& x : data) x = r.get<double>("parameter payload");
    try {
      store.add(std::move(name), num::Tensor<double>(std::move(shape), std::move(data)));
    } catch (const UsageError& e) {
      throw FormatError(e.what(), r.position());
    }
  }
  return store;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint8_t>(1));  // payload is 64-bit
  w.put_string(c.config_text);
  w.put(c.steps);
  put_store(w, c.params);
  put_store(w, c.first_moments);
  put_store(w, c.second_moments);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.get_bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError("bad magic, expected \"SOOM\"", 0);
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto dtype = r.get<std::uint8_t>("dtype");
  if (dtype != 1) throw FormatError("unsupported checkpoint dtype " + std::to_string(dtype), 8);
  Checkpoint c;
  c.config_text = r.get_string("config text");
  c.steps = r.get<std::uint64_t>("step count");
  c.params = get_store(r);
  c.first_moments = get_store(r);
  c.second_moments = get_store(r);
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after checkpoint", r.position());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  io::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

// ---- training ----

std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(step), std::uint32_t(step >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

Trainer::Trainer(ModelConfig model, TrainConfig train, num::ParamStore<double> params)
    : model_(std::move(model)), train_(train), params_(std::move(params)), optimizer_(train.optimizer) {
  model_.validate();
  if (train_.batch_queries == 0) throw ParameterError("batch_queries must be >= 1");
  frozen_.resize(params_.size(), false);
  if (train_.freeze_regressor) {
    for (std::size_t i = 0; i < params_.size(); ++i) frozen_[i] = is_regressor_param(params_.name(i));
  }
}

void Trainer::restore(const Checkpoint& checkpoint) {
  if (checkpoint.params.size() != params_.size()) throw UsageError("checkpoint does not match the model layout");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (checkpoint.params.name(i) != params_.name(i) ||
        checkpoint.params.tensor(i).shape() != params_.tensor(i).shape()) {
      throw UsageError("checkpoint parameter '" + checkpoint.params.name(i) + "' does not match the model");
    }
  }
  params_ = checkpoint.params;
  if (checkpoint.steps > 0) optimizer_.restore(checkpoint.steps, checkpoint.first_moments, checkpoint.second_moments);
}

namespace {

template <typename T>
std::pair<LossParts, std::vector<num::Tensor<double>>> run_step(const num::ParamStore<T>& params,
                                                                const ModelConfig& config,
                                                                const data::Batch& batch, bool want_grads) {
  num::Tape<T> tape;
  const num::BoundParams<T> bound(tape, params, want_grads);
  auto fwd = training_forward(tape, bound, config, batch);
  std::vector<num::Tensor<double>> grads;
  if (want_grads) {
    tape.backward(fwd.total);
    for (const auto& v : bound.vars()) grads.push_back(tape.grad(v).template cast<double>());
  }
  return {fwd.parts, std::move(grads)};
}

}  // namespace

LogEntry Trainer::step(const data::Dataset& dataset) {
  const auto batch = data::sample_batch(dataset, train_.batch_queries, batch_seed(train_.seed, optimizer_.steps()));
  std::pair<LossParts, std::vector<num::Tensor<double>>> result;
  if (train_.use_f32) {
    result = run_step(params_.cast<float>(), model_, batch, true);
  } else {
    result = run_step(params_, model_, batch, true);
  }
  for (const auto& g : result.second) num::require_finite(g.data(), "training gradient");
  optimizer_.step(params_, result.second, frozen_);
  return LogEntry{optimizer_.steps(), result.first};
}

LossParts Trainer::evaluate(const data::Batch& batch) const {
  if (train_.use_f32) return run_step(params_.cast<float>(), model_, batch, false).first;
  return run_step(params_, model_, batch, false).first;
}

Checkpoint Trainer::checkpoint(std::string config_text) const {
  Checkpoint c;
  c.config_text = std::move(config_text);
  c.params = params_;
  c.steps = optimizer_.steps();
  c.first_moments = optimizer_.first_moments();
  c.second_moments = optimizer_.second_moments();
  return c;
}

#define SOONET_INSTANTIATE_MODEL(T)                                                                     \
  template Weights<T> bind_weights<T>(const num::BoundParams<T>&, const ModelConfig&);                 \
  template Var<T> encode_anchors<T>(Var<T>, const Weights<T>&, const ModelConfig&);                     \
  template TrainingForward<T> training_forward<T>(num::Tape<T>&, const num::BoundParams<T>&,            \
                                                  const ModelConfig&, const data::Batch&);              \
  template EncodedVideo<T> encode_video<T>(const num::ParamStore<T>&, const ModelConfig&, num::Tensor<T>, \
                                           double);                                                     \
  template EncodedVideo<T> encode_video<T>(const num::ParamStore<T>&, const ModelConfig&,               \
                                           anchors::AnchorGrid, num::Tensor<T>);                        \
  template std::vector<Prediction> score_query<T>(const EncodedVideo<T>&, const num::ParamStore<T>&,    \
                                                  const ModelConfig&, std::span<const T>);              \
  template std::vector<Prediction> predict<T>(const num::ParamStore<T>&, const ModelConfig&,            \
                                              const data::VideoFeatures&, std::span<const double>);

SOONET_INSTANTIATE_MODEL(float)
SOONET_INSTANTIATE_MODEL(double)

}  // namespace soonet::model
