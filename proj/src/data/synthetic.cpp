#include "soonet/data/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "soonet/errors.hpp"

namespace soonet::data {
namespace {

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double s = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    s += x * x;
  }
  const double n = std::sqrt(s);
  for (auto& x : v) x /= n;
  return v;
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

SyntheticConfig mad_like_preset(std::size_t n_videos, std::size_t frames, std::size_t dim,
                                std::size_t queries_per_video, double signal_weight) {
  SyntheticConfig c;
  c.n_videos = n_videos;
  c.frames_per_video = frames;
  c.dim = dim;
  c.queries_per_video = queries_per_video;
  c.signal_weight = signal_weight;
  c.fps = 5.0;
  const double duration = double(frames) / c.fps;
  c.span_min_s = 0.01 * duration;
  c.span_max_s = 0.03 * duration;
  return c;
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  if (config.n_videos == 0 || config.frames_per_video == 0 || config.dim == 0) {
    throw ParameterError("synthetic data needs at least one video, frame and dimension");
  }
  if (!(config.fps > 0.0)) throw ParameterError("fps must be positive");
  if (!(config.signal_weight >= 0.0 && config.signal_weight <= 1.0)) {
    throw ParameterError("signal weight must lie in [0, 1]");
  }
  const double duration = double(config.frames_per_video) / config.fps;
  if (!(config.span_min_s > 0.0) || config.span_min_s > config.span_max_s ||
      config.span_max_s > duration) {
    throw ParameterError("span length range [" + std::to_string(config.span_min_s) + ", " +
                         std::to_string(config.span_max_s) + "] s is infeasible for a " +
                         std::to_string(duration) + " s video");
  }
  if (config.val_fraction < 0.0 || config.test_fraction < 0.0 ||
      config.val_fraction + config.test_fraction > 1.0) {
    throw ParameterError("split fractions must be non-negative and sum to at most 1");
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n_test = static_cast<std::size_t>(std::floor(config.test_fraction * double(config.n_videos)));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(config.val_fraction * double(config.n_videos)));
  const std::size_t n_train = config.n_videos - n_val - n_test;

  Dataset ds;
  ds.dtype = config.dtype;
  const std::size_t n = config.frames_per_video, d = config.dim;
  const double w = config.signal_weight;
  for (std::size_t vi = 0; vi < config.n_videos; ++vi) {
    VideoFeatures video;
    video.video_id = numbered("vid_", vi, 4);
    video.fps = config.fps;
    video.dtype = config.dtype;

    std::vector<double> noise(n * d);
    for (auto& x : noise) x = normal(rng);

    std::vector<QueryAnnotation> queries;
    std::vector<double> signal(n * d, 0.0);
    std::vector<char> covered(n, 0);
    for (std::size_t qi = 0; qi < config.queries_per_video; ++qi) {
      QueryAnnotation q;
      q.query_id = video.video_id + numbered("_q", qi, 3);
      q.video_id = video.video_id;
      q.query_vec = random_unit(rng, d);
      const double len = config.span_min_s + unit(rng) * (config.span_max_s - config.span_min_s);
      const double start = unit(rng) * (duration - len);
      q.span = Interval{start, start + len};
      for (std::size_t k = 0; k < n; ++k) {
        const double centre = (double(k) + 0.5) / config.fps;
        if (centre >= q.span.start && centre < q.span.end) {
          covered[k] = 1;
          for (std::size_t c = 0; c < d; ++c) signal[k * d + c] += q.query_vec[c];
        }
      }
      queries.push_back(std::move(q));
    }

    video.features = num::Tensor<double>::matrix(n, d);
    for (std::size_t k = 0; k < n; ++k) {
      auto row = video.features.mutable_row(k);
      double nn = 0.0;
      for (std::size_t c = 0; c < d; ++c) nn += noise[k * d + c] * noise[k * d + c];
      nn = std::sqrt(nn);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double unit_noise = noise[k * d + c] / nn;
        row[c] = covered[k] ? w * signal[k * d + c] + (1.0 - w) * unit_noise : unit_noise;
        s += row[c] * row[c];
      }
      const double norm = std::sqrt(s);
      for (auto& x : row) x = quantize(x / norm, config.dtype);
    }
    for (auto& q : queries) {
      for (auto& x : q.query_vec) x = quantize(x, config.dtype);
    }

    const Split split = vi < n_train ? Split::kTrain : vi < n_train + n_val ? Split::kVal : Split::kTest;
    ds.splits[video.video_id] = split;
    ds.annotations[video.video_id] = std::move(queries);
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

}  // namespace soonet::data
