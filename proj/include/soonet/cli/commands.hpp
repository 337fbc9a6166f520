#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "soonet/bench/bench.hpp"
#include "soonet/cli/run_config.hpp"
#include "soonet/eval/eval.hpp"
#include "soonet/model/gradient_suite.hpp"
#include "soonet/model/model.hpp"

namespace soonet::cli {

/// Environment variable naming the default data directory.
inline constexpr const char* kDataDirEnv = "SOONET_DATA_DIR";

/// `explicit_dir` when given, else $SOONET_DATA_DIR, else UsageError.
std::string resolve_data_dir(const std::optional<std::string>& explicit_dir);

/// Writes the synthetic dataset described by `config.data`. Refuses to
/// replace an existing dataset unless `force`.
data::Dataset cmd_datagen(const RunConfig& config, const std::string& out_dir, bool force);

struct TrainOutcome {
  model::Checkpoint checkpoint;
  std::vector<model::LogEntry> log;
};

/// Loss log: a header line, then `step align reg total ctx ctn` every
/// `log_every` steps and at the last step.
std::string format_log_header();
std::string format_log_line(const model::LogEntry& entry);

/// Trains on the dataset's train split and writes the checkpoint with the
/// config embedded. With `resume`, weights and optimizer state continue from
/// that checkpoint up to `config.steps` total steps. The log is appended to
/// `log_out` when given.
TrainOutcome cmd_train(const RunConfig& config, const std::string& data_dir, const std::string& out_model,
                       const std::optional<std::string>& resume = std::nullopt, std::ostream* log_out = nullptr);

/// Config stored in a checkpoint, overlaid with `overrides`.
RunConfig checkpoint_config(const model::Checkpoint& checkpoint,
                            const std::vector<std::pair<std::string, std::string>>& overrides);

/// Recall over the configured split with the checkpoint's weights.
eval::EvalResult cmd_eval(const RunConfig& config, const std::string& data_dir, const model::Checkpoint& checkpoint);

struct BenchResult {
  bench::PipelineReport onepass;
  bench::PipelineReport sliding;
  bench::Comparison comparison;
  /// Sliding model FLOPs over those of the same pipeline with stride = window.
  double flop_redundancy = 0.0;

  std::string json() const;
};

/// Both pipelines on every feed (a video with up to `bench_feed_queries` of
/// its queries), totalled over the set; each total is the median of
/// `bench_repeats` runs. Without a
/// checkpoint the model is freshly initialised from `config.seed`.
BenchResult cmd_bench(const RunConfig& config, const std::string& data_dir,
                      const std::optional<model::Checkpoint>& checkpoint);

model::GradientSuiteReport cmd_gradcheck(const RunConfig& config);

}  // namespace soonet::cli
