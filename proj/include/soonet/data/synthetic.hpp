#pragma once

#include <cstddef>
#include <cstdint>

#include "soonet/data/dataset.hpp"

namespace soonet::data {

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t n_videos = 4;
  std::size_t frames_per_video = 2000;
  std::size_t dim = 64;
  std::size_t queries_per_video = 8;
  /// Span length bounds in seconds.
  double span_min_s = 4.0;
  double span_max_s = 12.0;
  /// Mix weight of the query direction inside a planted span.
  double signal_weight = 0.8;
  double fps = 5.0;
  Precision dtype = Precision::kFloat64;
  double val_fraction = 0.0;
  double test_fraction = 0.0;
};

/// Short planted moments (1–3% of the video) at 5 features per second.
SyntheticConfig mad_like_preset(std::size_t n_videos, std::size_t frames, std::size_t dim,
                                std::size_t queries_per_video, double signal_weight = 0.8);

/// Background frames are normalised isotropic Gaussian noise. A frame whose
/// centre falls inside the spans of queries J becomes
/// normalize(w·Σ_{j∈J} q_j + (1−w)·noise). Pure function of the config.
Dataset generate_synthetic(const SyntheticConfig& config);

}  // namespace soonet::data
