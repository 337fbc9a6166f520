#include "soonet/data/dataset.hpp"

#include <cmath>

#include "soonet/errors.hpp"

namespace soonet::data {

std::string precision_name(Precision p) { return p == Precision::kFloat32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32" || name == "float32" || name == "32") return Precision::kFloat32;
  if (name == "f64" || name == "float64" || name == "64") return Precision::kFloat64;
  throw ParameterError("unknown precision '" + name + "' (expected f32 or f64)");
}

double quantize(double value, Precision p) {
  return p == Precision::kFloat32 ? double(static_cast<float>(value)) : value;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ParameterError("unknown split '" + name + "'");
}

const VideoFeatures& Dataset::video(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.video_id == id) return v;
  }
  throw UsageError("unknown video '" + id + "'");
}

const std::vector<QueryAnnotation>& Dataset::queries_of(const std::string& video_id) const {
  static const std::vector<QueryAnnotation> kNone;
  auto it = annotations.find(video_id);
  return it == annotations.end() ? kNone : it->second;
}

std::size_t Dataset::query_count() const {
  std::size_t n = 0;
  for (const auto& [id, qs] : annotations) n += qs.size();
  return n;
}

Dataset Dataset::subset(Split split) const {
  Dataset out;
  out.dtype = dtype;
  for (const auto& v : videos) {
    auto it = splits.find(v.video_id);
    const Split s = it == splits.end() ? Split::kTrain : it->second;
    if (s != split) continue;
    out.videos.push_back(v);
    out.splits[v.video_id] = s;
    if (auto a = annotations.find(v.video_id); a != annotations.end()) out.annotations[v.video_id] = a->second;
  }
  return out;
}

void Dataset::validate() const {
  const std::size_t d = dim();
  std::map<std::string, const VideoFeatures*> by_id;
  for (const auto& v : videos) {
    if (v.frames() == 0 || v.dim() == 0) throw UsageError("video '" + v.video_id + "' is empty");
    if (v.dim() != d) throw UsageError("video '" + v.video_id + "' has a different feature dimension");
    if (!(v.fps > 0.0)) throw UsageError("video '" + v.video_id + "' has non-positive fps");
    if (!by_id.emplace(v.video_id, &v).second) throw UsageError("duplicate video id '" + v.video_id + "'");
    for (std::size_t r = 0; r < v.frames(); ++r) {
      double s = 0.0;
      for (double x : v.features.row(r)) s += x * x;
      if (std::abs(std::sqrt(s) - 1.0) > 1e-5) {
        throw UsageError("video '" + v.video_id + "' row " + std::to_string(r) + " is not unit-norm");
      }
    }
  }
  for (const auto& [vid, qs] : annotations) {
    auto it = by_id.find(vid);
    if (it == by_id.end()) throw UsageError("annotations reference unknown video '" + vid + "'");
    for (const auto& q : qs) {
      if (q.video_id != vid) throw UsageError("annotation '" + q.query_id + "' filed under the wrong video");
      if (q.query_vec.size() != d) throw UsageError("query '" + q.query_id + "' has the wrong dimension");
      if (!(q.span.start >= 0.0 && q.span.start < q.span.end && q.span.end <= it->second->duration() + 1e-9)) {
        throw UsageError("query '" + q.query_id + "' span lies outside its video");
      }
    }
  }
}

}  // namespace soonet::data
