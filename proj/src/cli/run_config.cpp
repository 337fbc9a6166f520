#include "soonet/cli/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "soonet/errors.hpp"

namespace soonet::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ParameterError("bad value '" + value + "' for " + key);
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return parse_number<std::size_t>(key, value);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ParameterError("bad value '" + value + "' for " + key + " (expected true or false)");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + fmt(values[i]);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field size_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_size(k, v); },
          [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename M>
Field double_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_number<double>(k, v);
          },
          [member](const RunConfig& c) { return format_double(member(c)); }};
}

template <typename M>
Field bool_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); },
          [member](const RunConfig& c) { return format_bool(member(c)); }};
}

template <typename M>
Field precision_field(M member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { member(c) = data::parse_precision(v); },
          [member](const RunConfig& c) { return data::precision_name(member(c)); }};
}

#define SOONET_MEMBER(expr) [](auto& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"dim", size_field(SOONET_MEMBER(c.model.dim))},
      {"base_len", size_field(SOONET_MEMBER(c.model.base_len))},
      {"pool_factors",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<std::size_t> out;
          for (const auto& item : split_list(v)) out.push_back(parse_size(k, item));
          c.model.pool_factors = out;
        },
        [](const RunConfig& c) {
          return join(c.model.pool_factors, [](std::size_t x) { return std::to_string(x); });
        }}},
      {"scales",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.scales = parse_size(k, v); },
        [](const RunConfig& c) { return std::to_string(c.model.pool_factors.size()); }}},
      {"window_size", size_field(SOONET_MEMBER(c.model.encoder.window))},
      {"shift", size_field(SOONET_MEMBER(c.model.encoder.shift))},
      {"n_heads", size_field(SOONET_MEMBER(c.model.encoder.heads))},
      {"mlp_hidden", size_field(SOONET_MEMBER(c.model.encoder.mlp_hidden))},
      {"m", size_field(SOONET_MEMBER(c.model.m))},
      {"n", size_field(SOONET_MEMBER(c.model.n))},
      {"alpha_ctx", double_field(SOONET_MEMBER(c.model.alpha_ctx))},
      {"alpha_ctn", double_field(SOONET_MEMBER(c.model.alpha_ctn))},
      {"lambda1", double_field(SOONET_MEMBER(c.model.lambda1))},
      {"lambda2", double_field(SOONET_MEMBER(c.model.lambda2))},
      {"loss",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.model.loss.kind = loss::parse_rank_loss(v); },
        [](const RunConfig& c) { return loss::rank_loss_name(c.model.loss.kind); }}},
      {"nce_tau", double_field(SOONET_MEMBER(c.model.loss.nce_tau))},
      {"use_rr", bool_field(SOONET_MEMBER(c.model.use_rr))},
      {"use_br", bool_field(SOONET_MEMBER(c.model.use_br))},
      {"per_scale_regressor", bool_field(SOONET_MEMBER(c.model.per_scale_regressor))},
      {"detach_regression_context", bool_field(SOONET_MEMBER(c.model.detach_regression_context))},
      {"nms", bool_field(SOONET_MEMBER(c.model.nms))},
      {"nms_threshold", double_field(SOONET_MEMBER(c.model.nms_threshold))},
      {"lr", double_field(SOONET_MEMBER(c.lr))},
      {"weight_decay", double_field(SOONET_MEMBER(c.weight_decay))},
      {"lr_decay_after", size_field(SOONET_MEMBER(c.lr_decay_after))},
      {"lr_decay_factor", double_field(SOONET_MEMBER(c.lr_decay_factor))},
      {"steps", size_field(SOONET_MEMBER(c.steps))},
      {"batch_queries", size_field(SOONET_MEMBER(c.batch_queries))},
      {"seed", size_field(SOONET_MEMBER(c.seed))},
      {"precision", precision_field(SOONET_MEMBER(c.precision))},
      {"freeze_regressor", bool_field(SOONET_MEMBER(c.freeze_regressor))},
      {"log_every", size_field(SOONET_MEMBER(c.log_every))},
      {"data_seed", size_field(SOONET_MEMBER(c.data.seed))},
      {"data_videos", size_field(SOONET_MEMBER(c.data.n_videos))},
      {"data_frames", size_field(SOONET_MEMBER(c.data.frames_per_video))},
      {"data_queries", size_field(SOONET_MEMBER(c.data.queries_per_video))},
      {"data_span_min_s", double_field(SOONET_MEMBER(c.data.span_min_s))},
      {"data_span_max_s", double_field(SOONET_MEMBER(c.data.span_max_s))},
      {"data_signal_weight", double_field(SOONET_MEMBER(c.data.signal_weight))},
      {"data_fps", double_field(SOONET_MEMBER(c.data.fps))},
      {"data_precision", precision_field(SOONET_MEMBER(c.data.dtype))},
      {"data_val_fraction", double_field(SOONET_MEMBER(c.data.val_fraction))},
      {"data_test_fraction", double_field(SOONET_MEMBER(c.data.test_fraction))},
      {"eval_split",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          if (v != "all") data::parse_split(v);
          c.eval_split = v;
        },
        [](const RunConfig& c) { return c.eval_split; }}},
      {"recall_n",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<std::size_t> out;
          for (const auto& item : split_list(v)) out.push_back(parse_size(k, item));
          c.recall_n = out;
        },
        [](const RunConfig& c) { return join(c.recall_n, [](std::size_t x) { return std::to_string(x); }); }}},
      {"recall_iou",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<double> out;
          for (const auto& item : split_list(v)) out.push_back(parse_number<double>(k, item));
          c.recall_iou = out;
        },
        [](const RunConfig& c) { return join(c.recall_iou, format_double); }}},
      {"threads",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.threads = parse_number<int>(k, v); },
        [](const RunConfig& c) { return std::to_string(c.threads); }}},
      {"sliding_window", size_field(SOONET_MEMBER(c.sliding.window_frames))},
      {"sliding_stride", size_field(SOONET_MEMBER(c.sliding.stride_frames))},
      {"sliding_granularity", size_field(SOONET_MEMBER(c.sliding.granularity))},
      {"sliding_head",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.sliding.head = bench::parse_sliding_head(v); },
        [](const RunConfig& c) { return bench::sliding_head_name(c.sliding.head); }}},
      {"sliding_keep", size_field(SOONET_MEMBER(c.sliding.per_window_keep))},
      {"sliding_nms_threshold", double_field(SOONET_MEMBER(c.sliding.nms_threshold))},
      {"bench_precision", precision_field(SOONET_MEMBER(c.bench_precision))},
      {"bench_repeats", size_field(SOONET_MEMBER(c.bench_repeats))},
      {"bench_warmup", size_field(SOONET_MEMBER(c.bench_warmup))},
      {"bench_queries", size_field(SOONET_MEMBER(c.bench_queries))},
      {"bench_feed_queries", size_field(SOONET_MEMBER(c.bench_feed_queries))},
      {"gradcheck_seeds", size_field(SOONET_MEMBER(c.gradcheck_seeds))},
      {"gradcheck_tolerance", double_field(SOONET_MEMBER(c.gradcheck_tolerance))},
  };
  return table;
}

#undef SOONET_MEMBER

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw ParameterError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return out;
}

void RunConfig::validate() const {
  model.validate();
  if (scales != 0 && scales != model.pool_factors.size()) {
    throw ParameterError("scales = " + std::to_string(scales) + " disagrees with pool_factors (" +
                         std::to_string(model.pool_factors.size()) + " entries)");
  }
  if (!(lr > 0.0)) throw ParameterError("lr must be positive");
  if (weight_decay < 0.0) throw ParameterError("weight_decay must be >= 0");
  if (steps == 0) throw ParameterError("steps must be >= 1");
  if (batch_queries == 0) throw ParameterError("batch_queries must be >= 1");
  if (log_every == 0) throw ParameterError("log_every must be >= 1");
  if (data.dim != model.dim) {
    throw ParameterError("data dimension follows dim; got data " + std::to_string(data.dim) + " vs model " +
                         std::to_string(model.dim));
  }
  if (recall_n.empty() || recall_iou.empty()) throw ParameterError("recall_n and recall_iou must not be empty");
  for (std::size_t n : recall_n) {
    if (n == 0) throw ParameterError("recall_n entries must be >= 1");
  }
  for (double m : recall_iou) {
    if (!(m >= 0.0 && m < 1.0)) throw ParameterError("recall_iou entries must lie in [0, 1)");
  }
  if (threads < 1) throw ParameterError("threads must be >= 1");
  sliding.validate();
  if (bench_repeats == 0) throw ParameterError("bench_repeats must be >= 1");
  if (gradcheck_seeds == 0) throw ParameterError("gradcheck_seeds must be >= 1");
  if (!(gradcheck_tolerance > 0.0)) throw ParameterError("gradcheck_tolerance must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(*this) + "\n";
  return out;
}

model::TrainConfig RunConfig::train_config() const {
  model::TrainConfig t;
  t.steps = steps;
  t.batch_queries = batch_queries;
  t.seed = seed;
  t.freeze_regressor = freeze_regressor;
  t.use_f32 = precision == data::Precision::kFloat32;
  t.optimizer.lr = lr;
  t.optimizer.weight_decay = weight_decay;
  t.optimizer.decay_after = lr_decay_after;
  t.optimizer.decay_factor = lr_decay_factor;
  return t;
}

model::EvalOptions RunConfig::eval_options() const {
  model::EvalOptions o;
  o.ns = recall_n;
  o.ms = recall_iou;
  o.use_f32 = precision == data::Precision::kFloat32;
  o.threads = threads;
  return o;
}

std::vector<std::pair<std::string, std::string>> parse_assignments(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParameterError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_assignments(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& assignments) {
  for (const auto& [k, v] : assignments) {
    // The data dimension always follows the model's.
    config.set(k, v);
    if (k == "dim") config.data.dim = config.model.dim;
  }
  config.validate();
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  apply_assignments(config, parse_assignments(text));
  return config;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ParameterError("expected key=value, got '" + text + "'");
  auto key = trim(std::string_view(text).substr(0, eq));
  if (key.empty()) throw ParameterError("expected key=value, got '" + text + "'");
  return {key, trim(std::string_view(text).substr(eq + 1))};
}

}  // namespace soonet::cli
