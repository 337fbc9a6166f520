#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "soonet/data/dataset.hpp"
#include "soonet/model/model.hpp"
#include "soonet/prediction.hpp"

namespace soonet::bench {

enum class PipelineKind { kOnePass, kSliding };

std::string pipeline_name(PipelineKind kind);

/// Wall time per phase plus analytic model FLOPs for one or more videos, each
/// with a set of queries. `frames` and `queries` identify the input for
/// comparisons.
struct PipelineReport {
  PipelineKind kind = PipelineKind::kOnePass;
  double pre_seconds = 0.0;
  double model_seconds = 0.0;
  double post_seconds = 0.0;
  double total_seconds = 0.0;
  std::uint64_t flops = 0;
  /// Best effort: largest heap growth seen at phase boundaries.
  std::uint64_t peak_bytes = 0;
  std::uint64_t frames = 0;
  std::uint64_t queries = 0;

  double phase_sum() const { return pre_seconds + model_seconds + post_seconds; }
  std::string json() const;
};

/// Sums feeds of one pipeline; peak memory is the maximum.
PipelineReport sum_reports(std::span<const PipelineReport> reports);

enum class SlidingHead {
  kCosine,   // cosine of mean-pooled window features
  kEncoder,  // the one-pass encoder and context scores run on every window
};

std::string sliding_head_name(SlidingHead head);
SlidingHead parse_sliding_head(const std::string& name);

struct SlidingConfig {
  std::size_t window_frames = 128;
  std::size_t stride_frames = 64;
  /// Cosine head: proposals start and end on multiples of this many frames.
  std::size_t granularity = 8;
  SlidingHead head = SlidingHead::kCosine;
  /// Proposals kept per window before aggregation; 0 keeps all of them.
  std::size_t per_window_keep = 0;
  double nms_threshold = 0.5;
  /// Windows are scored in parallel when > 1.
  int threads = 1;

  void validate() const;
};

/// Frame range [lo, hi) of one window.
struct Window {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

/// Windows start every stride frames; the last one ends at the final frame.
/// A video shorter than one window is a single window.
std::vector<Window> sliding_windows(std::size_t frames, const SlidingConfig& config);

/// Local [lo, hi) frame ranges of every cosine-head proposal in a window.
std::vector<Window> window_proposals(std::size_t length, std::size_t granularity);

/// Cosine-head scores for every proposal of every window, window-major.
/// Prefix sums pool each proposal; windows run in parallel per `threads`.
template <typename T>
std::vector<std::vector<double>> sliding_scores(const std::vector<num::Tensor<T>>& windows,
                                                std::span<const T> query, std::size_t granularity,
                                                int threads = 1);

/// Serial reference: every proposal pooled directly.
template <typename T>
std::vector<std::vector<double>> sliding_scores_reference(const std::vector<num::Tensor<T>>& windows,
                                                          std::span<const T> query, std::size_t granularity);

using QueryList = std::vector<std::span<const double>>;

struct PipelineRun {
  /// Top-n predictions per query.
  std::vector<std::vector<Prediction>> predictions;
  PipelineReport report;
};

/// Pre: feature load and grid. Model: one encoder pass over the video, then
/// scoring, re-ranking and regression per query. Post: NMS and truncation.
template <typename T>
PipelineRun run_onepass(const data::VideoFeatures& video, const QueryList& queries,
                        const num::ParamStore<T>& params, const model::ModelConfig& config, std::size_t n);

/// Pre: slice and gather windows. Model: every window scored per query.
/// Post: aggregation, NMS and truncation per query. The encoder head needs
/// `params` and `model`; it encodes each window once and scores per query.
template <typename T>
PipelineRun run_sliding(const data::VideoFeatures& video, const QueryList& queries, const SlidingConfig& config,
                        std::size_t n, const num::ParamStore<T>* params = nullptr,
                        const model::ModelConfig* model = nullptr);

// Analytic FLOPs of the model phase for one video and `queries` queries. A
// matmul of m×k by k×n costs 2mkn; elementwise work is counted per element
// with fixed weights (layer norm 8, GELU 8, softmax 5, sigmoid 4).
std::uint64_t onepass_flops(const model::ModelConfig& config, std::size_t frames, std::size_t queries = 1);
std::uint64_t sliding_flops(const SlidingConfig& config, std::size_t frames, std::size_t dim,
                            const model::ModelConfig* model = nullptr, std::size_t queries = 1);

/// Sliding model FLOPs over those of the same pipeline with stride = window.
double flop_redundancy(const SlidingConfig& config, std::size_t frames, std::size_t dim,
                       const model::ModelConfig* model = nullptr);

struct Comparison {
  double speedup_pre = 0.0;
  double speedup_model = 0.0;
  double speedup_post = 0.0;
  double speedup_total = 0.0;

  std::string json() const;
};

/// Ratios baseline / candidate per phase. Throws UsageError unless both
/// reports cover the same frames and queries.
Comparison compare(const PipelineReport& baseline, const PipelineReport& candidate);

/// Runs `once` after `warmup` discarded calls `repeats` times and returns the
/// run with the median total.
PipelineReport median_run(const std::function<PipelineReport()>& once, std::size_t repeats = 5,
                          std::size_t warmup = 1);

}  // namespace soonet::bench
