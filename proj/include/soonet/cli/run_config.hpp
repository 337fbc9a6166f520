#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "soonet/bench/bench.hpp"
#include "soonet/data/dataset.hpp"
#include "soonet/data/synthetic.hpp"
#include "soonet/model/model.hpp"

namespace soonet::cli {

/// Every knob of a run. Text form is one `key = value` per line; `#` starts a
/// comment. Lists are comma separated.
struct RunConfig {
  model::ModelConfig model;
  /// When nonzero, must equal the number of pooling factors.
  std::size_t scales = 0;

  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t lr_decay_after = 0;
  double lr_decay_factor = 0.1;
  std::size_t steps = 1000;
  std::size_t batch_queries = 32;
  std::uint64_t seed = 0;
  data::Precision precision = data::Precision::kFloat64;
  bool freeze_regressor = false;
  std::size_t log_every = 1;

  data::SyntheticConfig data = data::mad_like_preset(20, 2000, 64, 32, 0.8);

  std::string eval_split = "train";
  std::vector<std::size_t> recall_n{1, 5};
  std::vector<double> recall_iou{0.1, 0.3, 0.5};
  int threads = 1;

  bench::SlidingConfig sliding;
  data::Precision bench_precision = data::Precision::kFloat32;
  std::size_t bench_repeats = 5;
  std::size_t bench_warmup = 1;
  /// Feeds per benchmark run; 0 uses every query.
  std::size_t bench_queries = 0;
  /// Queries per feed; 0 puts every query of a video in one feed, 1 feeds one
  /// video and one query at a time.
  std::size_t bench_feed_queries = 0;

  std::size_t gradcheck_seeds = 5;
  double gradcheck_tolerance = 1e-4;

  /// Assigns one key from its text value. Throws ParameterError for unknown
  /// keys or values that do not parse.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Cross-field checks. Throws ParameterError.
  void validate() const;

  /// Every key in a fixed order; parsing it back gives an equal config.
  std::string to_text() const;

  model::TrainConfig train_config() const;
  model::EvalOptions eval_options() const;

  static const std::vector<std::string>& keys();
};

/// Parses `key = value` lines into ordered assignments.
std::vector<std::pair<std::string, std::string>> parse_assignments(std::string_view text);

/// Defaults overlaid with the assignments of `text`, then validated.
RunConfig parse_run_config(std::string_view text);

/// Applies assignments in order, then validates.
void apply_assignments(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& assignments);

/// Splits "key=value" as given on the command line.
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace soonet::cli
