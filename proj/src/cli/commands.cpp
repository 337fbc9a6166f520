#include "soonet/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <ostream>

#include "json.hpp"
#include "soonet/data/feature_io.hpp"
#include "soonet/data/synthetic.hpp"
#include "soonet/errors.hpp"

namespace soonet::cli {
namespace {

data::Dataset load_checked(const std::string& dir, std::size_t dim) {
  auto dataset = data::load_dataset(dir);
  if (dataset.videos.empty()) throw UsageError("dataset in '" + dir + "' has no videos");
  if (dataset.dim() != dim) {
    throw DimensionError("dataset has D=" + std::to_string(dataset.dim()) + " but the config says dim=" +
                         std::to_string(dim));
  }
  return dataset;
}

data::Dataset select_split(const data::Dataset& dataset, const std::string& split) {
  if (split == "all") return dataset;
  return dataset.subset(data::parse_split(split));
}

struct Feed {
  const data::VideoFeatures* video;
  bench::QueryList queries;
};

// Every video with its queries, `limit` queries in total when nonzero.
std::vector<Feed> feeds_of(const data::Dataset& dataset, std::size_t limit, std::size_t per_feed) {
  std::vector<Feed> out;
  std::size_t taken = 0;
  for (const auto& v : dataset.videos) {
    Feed feed{&v, {}};
    for (const auto& q : dataset.queries_of(v.video_id)) {
      if (limit && taken == limit) break;
      feed.queries.push_back(q.query_vec);
      ++taken;
      if (per_feed && feed.queries.size() == per_feed) {
        out.push_back(std::move(feed));
        feed = Feed{&v, {}};
      }
    }
    if (!feed.queries.empty()) out.push_back(std::move(feed));
  }
  return out;
}

template <typename T>
BenchResult bench_as(const RunConfig& config, const data::Dataset& dataset, const num::ParamStore<double>& params64) {
  const auto params = params64.cast<T>();
  const auto feeds = feeds_of(dataset, config.bench_queries, config.bench_feed_queries);
  if (feeds.empty()) throw UsageError("bench: the dataset has no queries");
  auto sliding = config.sliding;
  sliding.threads = config.threads;
  const auto& model = config.model;

  auto onepass_set = [&] {
    std::vector<bench::PipelineReport> parts;
    for (const auto& f : feeds) {
      parts.push_back(bench::run_onepass<T>(*f.video, f.queries, params, model, model.n).report);
    }
    return bench::sum_reports(parts);
  };
  auto sliding_set = [&] {
    std::vector<bench::PipelineReport> parts;
    for (const auto& f : feeds) {
      parts.push_back(bench::run_sliding<T>(*f.video, f.queries, sliding, model.n, &params, &model).report);
    }
    return bench::sum_reports(parts);
  };

  BenchResult out;
  out.onepass = bench::median_run(onepass_set, config.bench_repeats, config.bench_warmup);
  out.sliding = bench::median_run(sliding_set, config.bench_repeats, config.bench_warmup);
  out.comparison = bench::compare(out.sliding, out.onepass);

  double overlapped = 0.0, partitioned = 0.0;
  for (const auto& f : feeds) {
    const double flops = double(bench::sliding_flops(sliding, f.video->frames(), f.video->dim(), &model));
    overlapped += flops;
    partitioned += flops / bench::flop_redundancy(sliding, f.video->frames(), f.video->dim(), &model);
  }
  out.flop_redundancy = overlapped / partitioned;
  return out;
}

}  // namespace

std::string resolve_data_dir(const std::optional<std::string>& explicit_dir) {
  if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  throw UsageError(std::string("no data directory: pass --data or set ") + kDataDirEnv);
}

data::Dataset cmd_datagen(const RunConfig& config, const std::string& out_dir, bool force) {
  config.validate();
  auto dataset = data::generate_synthetic(config.data);
  data::save_dataset(out_dir, dataset, force);
  return dataset;
}

std::string format_log_header() { return "step\talign\treg\ttotal\tctx\tctn\n"; }

std::string format_log_line(const model::LogEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", static_cast<unsigned long long>(e.step),
                e.parts.align, e.parts.reg, e.parts.total, e.parts.ctx, e.parts.ctn);
  return buf;
}

TrainOutcome cmd_train(const RunConfig& config, const std::string& data_dir, const std::string& out_model,
                       const std::optional<std::string>& resume, std::ostream* log_out) {
  config.validate();
  const auto dataset = load_checked(data_dir, config.model.dim);
  const auto train = dataset.subset(data::Split::kTrain);
  if (train.query_count() == 0) throw UsageError("the train split has no queries");

  model::Trainer trainer(config.model, config.train_config(), model::init_params(config.model, config.seed));
  if (resume) trainer.restore(model::load_checkpoint(*resume));
  if (trainer.steps_done() > config.steps) {
    throw UsageError("checkpoint is already at step " + std::to_string(trainer.steps_done()) + ", past steps = " +
                     std::to_string(config.steps));
  }

  TrainOutcome out;
  if (log_out) *log_out << format_log_header();
  while (trainer.steps_done() < config.steps) {
    const auto entry = trainer.step(train);
    out.log.push_back(entry);
    if (log_out && (entry.step % config.log_every == 0 || entry.step == config.steps)) {
      *log_out << format_log_line(entry);
      log_out->flush();
    }
  }
  out.checkpoint = trainer.checkpoint(config.to_text());
  model::save_checkpoint(out_model, out.checkpoint);
  return out;
}

RunConfig checkpoint_config(const model::Checkpoint& checkpoint,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig config;
  auto assignments = parse_assignments(checkpoint.config_text);
  assignments.insert(assignments.end(), overrides.begin(), overrides.end());
  apply_assignments(config, assignments);
  return config;
}

eval::EvalResult cmd_eval(const RunConfig& config, const std::string& data_dir, const model::Checkpoint& checkpoint) {
  config.validate();
  const auto dataset = load_checked(data_dir, config.model.dim);
  const auto split = select_split(dataset, config.eval_split);
  if (split.query_count() == 0) throw UsageError("split '" + config.eval_split + "' has no queries");
  return model::evaluate(checkpoint.params, config.model, split, config.eval_options());
}

std::string BenchResult::json() const {
  nlohmann::ordered_json j;
  j["onepass"] = nlohmann::ordered_json::parse(onepass.json());
  j["sliding"] = nlohmann::ordered_json::parse(sliding.json());
  j["comparison"] = nlohmann::ordered_json::parse(comparison.json());
  j["flop_redundancy"] = flop_redundancy;
  return j.dump(2);
}

BenchResult cmd_bench(const RunConfig& config, const std::string& data_dir,
                      const std::optional<model::Checkpoint>& checkpoint) {
  config.validate();
  const auto dataset = load_checked(data_dir, config.model.dim);
  const auto params = checkpoint ? checkpoint->params : model::init_params(config.model, config.seed);
  if (config.bench_precision == data::Precision::kFloat32) return bench_as<float>(config, dataset, params);
  return bench_as<double>(config, dataset, params);
}

model::GradientSuiteReport cmd_gradcheck(const RunConfig& config) {
  config.validate();
  return model::run_gradient_suite(config.gradcheck_seeds, config.gradcheck_tolerance, config.seed);
}

}  // namespace soonet::cli
