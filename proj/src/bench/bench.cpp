#include "soonet/bench/bench.hpp"

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "soonet/anchors/anchors.hpp"
#include "soonet/errors.hpp"
#include "soonet/eval/eval.hpp"
#include "soonet/ranking/ranking.hpp"
#include "soonet/regression/regression.hpp"

namespace soonet::bench {
namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t heap_in_use() {
  const auto info = mallinfo2();
  return std::uint64_t(info.uordblks) + std::uint64_t(info.hblkhd);
}

// Heap growth over a baseline, sampled when asked.
class HeapWatch {
 public:
  HeapWatch() : base_(heap_in_use()) {}
  void sample() {
    const std::uint64_t now = heap_in_use();
    if (now > base_) peak_ = std::max(peak_, now - base_);
  }
  std::uint64_t peak() const { return peak_; }

 private:
  std::uint64_t base_;
  std::uint64_t peak_ = 0;
};

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T>
double norm_of(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

template <typename T>
std::vector<std::vector<T>> to_precision(const QueryList& queries) {
  std::vector<std::vector<T>> out;
  for (const auto& q : queries) out.emplace_back(q.begin(), q.end());
  return out;
}

template <typename T>
std::vector<double> score_window(const num::Tensor<T>& frames, std::span<const T> query, double qn,
                                 const std::vector<Window>& proposals) {
  const std::size_t d = frames.cols();
  const std::size_t len = frames.rows();
  std::vector<double> prefix((len + 1) * d, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    const auto row = frames.row(k);
    for (std::size_t j = 0; j < d; ++j) prefix[(k + 1) * d + j] = prefix[k * d + j] + double(row[j]);
  }
  std::vector<double> out(proposals.size());
  std::vector<double> mean(d);
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    const auto [lo, hi] = proposals[p];
    const double inv = 1.0 / double(hi - lo);
    double dot = 0.0, nn = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = (prefix[hi * d + j] - prefix[lo * d + j]) * inv;
      dot += mean[j] * double(query[j]);
      nn += mean[j] * mean[j];
    }
    out[p] = sigmoid(dot / (std::sqrt(nn) * qn + rank::kCosineEps));
  }
  return out;
}

// Attention inside every segment of a layout.
std::uint64_t attention_flops(const num::AttentionLayout& layout, std::size_t dim, std::size_t heads) {
  std::uint64_t f = 0;
  for (std::size_t s = 0; s + 1 < layout.segments.size(); ++s) {
    const std::uint64_t n = layout.segments[s + 1] - layout.segments[s];
    f += 4 * n * n * dim + 6 * n * n * heads;  // QKᵀ, AV, scaling, softmax
  }
  return f;
}

constexpr std::uint64_t kLayerNorm = 8;
constexpr std::uint64_t kGelu = 8;
constexpr std::uint64_t kSoftmax = 5;
constexpr std::uint64_t kSigmoid = 4;

std::uint64_t msa_flops(std::size_t rows, std::size_t dim, std::size_t heads, const num::AttentionLayout& layout) {
  const std::uint64_t r = rows, d = dim;
  return 2 * r * d * 3 * d + 3 * r * d + attention_flops(layout, dim, heads) + 2 * r * d * d + r * d;
}

std::uint64_t mlp_flops(std::size_t rows, std::size_t in, std::size_t hidden, std::size_t out) {
  const std::uint64_t r = rows;
  return 2 * r * in * hidden + r * hidden + kGelu * r * hidden + 2 * r * hidden * out + r * out;
}

std::uint64_t swin_flops(std::size_t rows, std::size_t valid, std::size_t dim, const enc::EncoderConfig& enc) {
  const std::uint64_t r = rows, d = dim;
  const std::size_t hidden = enc.hidden_for(dim);
  const auto plain = enc::window_layout(rows, valid, enc.window, 0);
  const auto shifted = enc::window_layout(rows, valid, enc.window, enc.shift);
  return 4 * kLayerNorm * r * d + msa_flops(rows, dim, enc.heads, plain) +
         msa_flops(rows, dim, enc.heads, shifted) + 2 * mlp_flops(rows, dim, hidden, dim) + 4 * r * d;
}

// Projection and multiscale encoder; query independent.
std::uint64_t encoder_flops(const model::ModelConfig& config, const anchors::AnchorGrid& grid) {
  const std::uint64_t d = config.dim;
  const std::uint64_t base = grid.base_count();
  std::uint64_t f = 2 * base * (config.base_len * d) * d + base * d;
  std::size_t rows = grid.base_count();
  for (std::size_t l = 0; l < grid.scale_count(); ++l) {
    f += swin_flops(rows, rows, config.dim, config.encoder);
    if (config.pool_factors[l] > 1) f += std::uint64_t(rows) * d;
    rows = grid.count(l);
  }
  return f;
}

// Context scores over every anchor, then re-ranking and regression of the
// top-m subset at nominal anchor lengths.
std::uint64_t query_flops(const model::ModelConfig& config, const anchors::AnchorGrid& grid) {
  const std::uint64_t d = config.dim;
  std::uint64_t f = 2 * d + std::uint64_t(grid.total()) * (4 * d + 2 + kSigmoid);
  if (!config.use_rr && !config.use_br) return f;
  std::uint64_t rows = 0, anchors = 0, attention = 0;
  for (std::size_t l = 0; l < grid.scale_count(); ++l) {
    const std::uint64_t k = std::min<std::uint64_t>(config.m, grid.count(l));
    const std::uint64_t c = grid.length(l);
    anchors += k;
    rows += k * c;
    attention += k * (4 * c * c * d + 6 * c * c * config.encoder.heads);
  }
  f += rows * d + kLayerNorm * rows * d + 2 * rows * d * 3 * d + 3 * rows * d + attention + 2 * rows * d * d +
       rows * d + rows * d;
  if (config.use_rr) f += rows * (4 * d + 2) + anchors * (2 + kSigmoid) + anchors;
  if (config.use_br) {
    f += 2 * rows * d + kSoftmax * rows + 2 * rows * d;  // attentive pooling
    f += anchors * 4 * d + mlp_flops(anchors, 2 * d, 2 * d, 2) + anchors * 10;
  }
  return f;
}

void check_queries(const QueryList& queries, std::size_t dim, const char* who) {
  if (queries.empty()) throw UsageError(std::string(who) + ": no queries");
  for (const auto& q : queries) {
    if (q.size() != dim) throw DimensionError(std::string(who) + ": query and video dimensions differ");
  }
}

}  // namespace

std::string pipeline_name(PipelineKind kind) {
  return kind == PipelineKind::kOnePass ? "one-pass" : "sliding-window";
}

std::string PipelineReport::json() const {
  nlohmann::ordered_json j;
  j["kind"] = pipeline_name(kind);
  j["pre_s"] = pre_seconds;
  j["model_s"] = model_seconds;
  j["post_s"] = post_seconds;
  j["total_s"] = total_seconds;
  j["flops"] = flops;
  j["peak_bytes"] = peak_bytes;
  j["frames"] = frames;
  j["queries"] = queries;
  return j.dump();
}

PipelineReport sum_reports(std::span<const PipelineReport> reports) {
  if (reports.empty()) throw UsageError("sum_reports: no reports");
  PipelineReport out;
  out.kind = reports.front().kind;
  for (const auto& r : reports) {
    if (r.kind != out.kind) throw UsageError("sum_reports: reports of different pipelines");
    out.pre_seconds += r.pre_seconds;
    out.model_seconds += r.model_seconds;
    out.post_seconds += r.post_seconds;
    out.total_seconds += r.total_seconds;
    out.flops += r.flops;
    out.peak_bytes = std::max(out.peak_bytes, r.peak_bytes);
    out.frames += r.frames;
    out.queries += r.queries;
  }
  return out;
}

std::string sliding_head_name(SlidingHead head) { return head == SlidingHead::kCosine ? "cosine" : "encoder"; }

SlidingHead parse_sliding_head(const std::string& name) {
  if (name == "cosine") return SlidingHead::kCosine;
  if (name == "encoder") return SlidingHead::kEncoder;
  throw ParameterError("unknown sliding head '" + name + "' (expected cosine or encoder)");
}

void SlidingConfig::validate() const {
  if (window_frames == 0) throw ParameterError("sliding window must be >= 1 frame");
  if (stride_frames == 0 || stride_frames > window_frames) {
    throw ParameterError("sliding stride must satisfy 0 < stride <= window (stride " +
                         std::to_string(stride_frames) + ", window " + std::to_string(window_frames) + ")");
  }
  if (granularity == 0) throw ParameterError("proposal granularity must be >= 1");
  if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0)) throw ParameterError("NMS threshold must lie in [0, 1]");
  if (threads < 1) throw ParameterError("threads must be >= 1");
}

std::vector<Window> sliding_windows(std::size_t frames, const SlidingConfig& config) {
  config.validate();
  if (frames == 0) throw UsageError("sliding_windows: empty video");
  const std::size_t w = config.window_frames, s = config.stride_frames;
  if (frames <= w) return {{0, frames}};
  const std::size_t count = (frames - w + s - 1) / s + 1;
  std::vector<Window> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t lo = std::min(k * s, frames - w);
    out[k] = {lo, lo + w};
  }
  return out;
}

std::vector<Window> window_proposals(std::size_t length, std::size_t granularity) {
  if (granularity == 0) throw ParameterError("proposal granularity must be >= 1");
  const std::size_t units = (length + granularity - 1) / granularity;
  std::vector<Window> out;
  out.reserve(units * (units + 1) / 2);
  for (std::size_t a = 0; a < units; ++a) {
    for (std::size_t b = a + 1; b <= units; ++b) out.push_back({a * granularity, std::min(b * granularity, length)});
  }
  return out;
}

template <typename T>
std::vector<std::vector<double>> sliding_scores(const std::vector<num::Tensor<T>>& windows,
                                                std::span<const T> query, std::size_t granularity, int threads) {
  if (threads < 1) throw ParameterError("threads must be >= 1");
  const double qn = norm_of(query);
  if (qn == 0.0) throw NumericError("sliding_scores: zero query vector");
  for (const auto& w : windows) {
    if (w.cols() != query.size()) throw DimensionError("sliding_scores: window and query dimensions differ");
  }
  std::vector<std::vector<double>> out(windows.size());
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (std::size_t k = 0; k < windows.size(); ++k) {
    out[k] = score_window(windows[k], query, qn, window_proposals(windows[k].rows(), granularity));
  }
  return out;
}

template <typename T>
std::vector<std::vector<double>> sliding_scores_reference(const std::vector<num::Tensor<T>>& windows,
                                                          std::span<const T> query, std::size_t granularity) {
  const double qn = norm_of(query);
  if (qn == 0.0) throw NumericError("sliding_scores_reference: zero query vector");
  std::vector<std::vector<double>> out;
  for (const auto& w : windows) {
    if (w.cols() != query.size()) throw DimensionError("sliding_scores_reference: dimensions differ");
    std::vector<double> scores;
    for (const auto [lo, hi] : window_proposals(w.rows(), granularity)) {
      std::vector<double> mean(w.cols(), 0.0);
      for (std::size_t k = lo; k < hi; ++k) {
        for (std::size_t j = 0; j < w.cols(); ++j) mean[j] += double(w(k, j));
      }
      for (double& x : mean) x /= double(hi - lo);
      double dot = 0.0, nn = 0.0;
      for (std::size_t j = 0; j < mean.size(); ++j) {
        dot += mean[j] * double(query[j]);
        nn += mean[j] * mean[j];
      }
      scores.push_back(sigmoid(dot / (std::sqrt(nn) * qn + rank::kCosineEps)));
    }
    out.push_back(std::move(scores));
  }
  return out;
}

template <typename T>
PipelineRun run_onepass(const data::VideoFeatures& video, const QueryList& queries,
                        const num::ParamStore<T>& params, const model::ModelConfig& config, std::size_t n) {
  config.validate();
  check_queries(queries, video.dim(), "run_onepass");
  PipelineRun run;
  auto& rep = run.report;
  rep.kind = PipelineKind::kOnePass;
  rep.frames = video.frames();
  rep.queries = queries.size();
  HeapWatch heap;
  const auto t0 = Clock::now();

  auto frames = video.features.template cast<T>();
  const auto q = to_precision<T>(queries);
  anchors::AnchorGrid grid(video.frames(), video.fps, config.base_len, config.pool_factors);
  heap.sample();
  const auto t1 = Clock::now();

  const auto encoded = model::encode_video(params, config, std::move(grid), std::move(frames));
  std::vector<std::vector<Prediction>> ranked;
  ranked.reserve(q.size());
  for (const auto& query : q) ranked.push_back(model::score_query(encoded, params, config, std::span<const T>(query)));
  heap.sample();
  const auto t2 = Clock::now();

  for (auto& r : ranked) run.predictions.push_back(reg::top_n(std::move(r), n, config.nms, config.nms_threshold));
  heap.sample();
  const auto t3 = Clock::now();

  rep.pre_seconds = std::chrono::duration<double>(t1 - t0).count();
  rep.model_seconds = std::chrono::duration<double>(t2 - t1).count();
  rep.post_seconds = std::chrono::duration<double>(t3 - t2).count();
  rep.total_seconds = std::chrono::duration<double>(t3 - t0).count();
  rep.flops = onepass_flops(config, video.frames(), queries.size());
  rep.peak_bytes = heap.peak();
  return run;
}

template <typename T>
PipelineRun run_sliding(const data::VideoFeatures& video, const QueryList& queries, const SlidingConfig& config,
                        std::size_t n, const num::ParamStore<T>* params, const model::ModelConfig* model) {
  config.validate();
  if (config.head == SlidingHead::kEncoder && (!params || !model)) {
    throw UsageError("run_sliding: the encoder head needs model parameters");
  }
  check_queries(queries, video.dim(), "run_sliding");
  PipelineRun run;
  auto& rep = run.report;
  rep.kind = PipelineKind::kSliding;
  rep.frames = video.frames();
  rep.queries = queries.size();
  const std::size_t d = video.dim();
  HeapWatch heap;
  const auto t0 = Clock::now();

  const auto windows = sliding_windows(video.frames(), config);
  std::vector<num::Tensor<T>> gathered;
  gathered.reserve(windows.size());
  for (const auto& w : windows) {
    auto t = num::Tensor<T>::matrix(w.hi - w.lo, d);
    const auto src = video.features.data().subspan(w.lo * d, (w.hi - w.lo) * d);
    std::transform(src.begin(), src.end(), t.mutable_data().begin(), [](double x) { return T(x); });
    gathered.push_back(std::move(t));
  }
  const auto q = to_precision<T>(queries);
  heap.sample();
  const auto t1 = Clock::now();

  // Per window: local proposals; per query and window: their scores.
  std::vector<std::vector<Window>> spans(windows.size());
  std::vector<std::vector<std::vector<double>>> scores(q.size());
  if (config.head == SlidingHead::kCosine) {
    for (std::size_t k = 0; k < windows.size(); ++k) spans[k] = window_proposals(gathered[k].rows(), config.granularity);
    for (std::size_t i = 0; i < q.size(); ++i) {
      scores[i] = sliding_scores(gathered, std::span<const T>(q[i]), config.granularity, config.threads);
    }
  } else {
    for (auto& s : scores) s.resize(windows.size());
#pragma omp parallel for schedule(static) num_threads(config.threads) if (config.threads > 1)
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto ev = model::encode_video(*params, *model, gathered[k], video.fps);
      for (std::size_t i = 0; i < q.size(); ++i) {
        scores[i][k] = rank::context_scores(ev.anchor_features, std::span<const T>(q[i]));
      }
      for (const auto& a : ev.grid.anchors()) spans[k].push_back({a.frame_lo, a.frame_hi});
    }
  }
  heap.sample();
  const auto t2 = Clock::now();

  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<Prediction> pool;
    std::size_t source = 0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      std::vector<Prediction> local;
      local.reserve(spans[k].size());
      for (std::size_t p = 0; p < spans[k].size(); ++p, ++source) {
        const double lo = double(windows[k].lo + spans[k][p].lo) / video.fps;
        const double hi = double(windows[k].lo + spans[k][p].hi) / video.fps;
        local.push_back({Interval{lo, hi}, scores[i][k][p], source});
      }
      if (config.per_window_keep > 0) local = reg::top_n(std::move(local), config.per_window_keep);
      pool.insert(pool.end(), local.begin(), local.end());
    }
    run.predictions.push_back(eval::nms_1d(std::move(pool), config.nms_threshold, n));
  }
  heap.sample();
  const auto t3 = Clock::now();

  rep.pre_seconds = std::chrono::duration<double>(t1 - t0).count();
  rep.model_seconds = std::chrono::duration<double>(t2 - t1).count();
  rep.post_seconds = std::chrono::duration<double>(t3 - t2).count();
  rep.total_seconds = std::chrono::duration<double>(t3 - t0).count();
  rep.flops = sliding_flops(config, video.frames(), d, model, queries.size());
  rep.peak_bytes = heap.peak();
  return run;
}

std::uint64_t onepass_flops(const model::ModelConfig& config, std::size_t frames, std::size_t queries) {
  config.validate();
  if (frames == 0) throw UsageError("onepass_flops: empty video");
  const anchors::AnchorGrid grid(frames, 1.0, config.base_len, config.pool_factors);
  return encoder_flops(config, grid) + queries * query_flops(config, grid);
}

std::uint64_t sliding_flops(const SlidingConfig& config, std::size_t frames, std::size_t dim,
                            const model::ModelConfig* model, std::size_t queries) {
  const auto windows = sliding_windows(frames, config);
  const std::uint64_t d = dim;
  std::uint64_t f = 0;
  if (config.head == SlidingHead::kCosine) {
    f += 2 * d;  // query norm
    for (const auto& w : windows) {
      const std::uint64_t len = w.hi - w.lo;
      const std::uint64_t proposals = window_proposals(len, config.granularity).size();
      f += len * d + proposals * (6 * d + 2 + kSigmoid);
    }
    return queries * f;
  }
  if (!model) throw UsageError("sliding_flops: the encoder head needs a model configuration");
  auto pr_only = *model;
  pr_only.use_rr = pr_only.use_br = false;
  for (const auto& w : windows) f += onepass_flops(pr_only, w.hi - w.lo, queries);
  return f;
}

double flop_redundancy(const SlidingConfig& config, std::size_t frames, std::size_t dim,
                       const model::ModelConfig* model) {
  auto partition = config;
  partition.stride_frames = partition.window_frames;
  return double(sliding_flops(config, frames, dim, model)) / double(sliding_flops(partition, frames, dim, model));
}

std::string Comparison::json() const {
  nlohmann::ordered_json j;
  j["speedup_pre"] = speedup_pre;
  j["speedup_model"] = speedup_model;
  j["speedup_post"] = speedup_post;
  j["speedup_total"] = speedup_total;
  return j.dump();
}

Comparison compare(const PipelineReport& baseline, const PipelineReport& candidate) {
  if (baseline.frames != candidate.frames || baseline.queries != candidate.queries) {
    throw UsageError("compare: reports cover different inputs (" + std::to_string(baseline.frames) + " frames / " +
                     std::to_string(baseline.queries) + " queries vs " + std::to_string(candidate.frames) +
                     " / " + std::to_string(candidate.queries) + ")");
  }
  auto ratio = [](double a, double b) {
    if (b > 0.0) return a / b;
    return a > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  };
  return {ratio(baseline.pre_seconds, candidate.pre_seconds), ratio(baseline.model_seconds, candidate.model_seconds),
          ratio(baseline.post_seconds, candidate.post_seconds), ratio(baseline.total_seconds, candidate.total_seconds)};
}

PipelineReport median_run(const std::function<PipelineReport()>& once, std::size_t repeats, std::size_t warmup) {
  if (repeats == 0) throw ParameterError("repeats must be >= 1");
  for (std::size_t i = 0; i < warmup; ++i) once();
  std::vector<PipelineReport> runs;
  for (std::size_t i = 0; i < repeats; ++i) runs.push_back(once());
  std::sort(runs.begin(), runs.end(),
            [](const PipelineReport& a, const PipelineReport& b) { return a.total_seconds < b.total_seconds; });
  return runs[(runs.size() - 1) / 2];
}

#define SOONET_INSTANTIATE_BENCH(T)                                                                          \
  template std::vector<std::vector<double>> sliding_scores<T>(const std::vector<num::Tensor<T>>&,             \
                                                              std::span<const T>, std::size_t, int);          \
  template std::vector<std::vector<double>> sliding_scores_reference<T>(const std::vector<num::Tensor<T>>&,   \
                                                                        std::span<const T>, std::size_t);     \
  template PipelineRun run_onepass<T>(const data::VideoFeatures&, const QueryList&, const num::ParamStore<T>&, \
                                      const model::ModelConfig&, std::size_t);                                \
  template PipelineRun run_sliding<T>(const data::VideoFeatures&, const QueryList&, const SlidingConfig&,      \
                                      std::size_t, const num::ParamStore<T>*, const model::ModelConfig*);

SOONET_INSTANTIATE_BENCH(float)
SOONET_INSTANTIATE_BENCH(double)

}  // namespace soonet::bench
