#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "soonet/interval.hpp"
#include "soonet/numerics/tensor.hpp"

namespace soonet::data {

enum class Precision : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

/// Rounds to float when `p` is 32-bit, so values survive a file round trip
/// exactly.
double quantize(double value, Precision p);

/// Per-frame features of one video. Rows are unit-norm.
struct VideoFeatures {
  std::string video_id;
  double fps = 1.0;
  Precision dtype = Precision::kFloat64;
  num::Tensor<double> features;  // N × D

  std::size_t frames() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  double duration() const { return double(frames()) / fps; }
};

struct QueryAnnotation {
  std::string query_id;
  std::string video_id;
  std::vector<double> query_vec;  // unit-norm, length D
  Interval span;                  // ground-truth moment, seconds
};

enum class Split { kTrain, kVal, kTest };

std::string split_name(Split s);
Split parse_split(const std::string& name);

struct Dataset {
  std::vector<VideoFeatures> videos;
  std::map<std::string, std::vector<QueryAnnotation>> annotations;
  std::map<std::string, Split> splits;
  Precision dtype = Precision::kFloat64;

  std::size_t dim() const { return videos.empty() ? 0 : videos.front().dim(); }
  const VideoFeatures& video(const std::string& id) const;
  const std::vector<QueryAnnotation>& queries_of(const std::string& video_id) const;
  std::size_t query_count() const;

  /// Videos (and their annotations) of one split.
  Dataset subset(Split split) const;

  /// Throws FormatError/UsageError when an invariant is violated: unknown
  /// video references, non-unit rows, spans outside the video, D mismatch.
  void validate() const;
};

}  // namespace soonet::data
