#include "soonet/data/feature_io.hpp"

#include <filesystem>
#include <sstream>

#include "json.hpp"

#include "soonet/errors.hpp"
#include "soonet/io/binary.hpp"

namespace soonet::data {
namespace fs = std::filesystem;
using nlohmann::json;

std::string encode_features(const VideoFeatures& video) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kFeatureMagic, 4));
  w.put(kFeatureVersion);
  w.put(static_cast<std::uint8_t>(video.dtype));
  w.put(video.fps);
  w.put(static_cast<std::uint64_t>(video.frames()));
  w.put(static_cast<std::uint64_t>(video.dim()));
  for (double x : video.features.data()) {
    if (video.dtype == Precision::kFloat32) {
      w.put(static_cast<float>(x));
    } else {
      w.put(x);
    }
  }
  return w.take();
}

VideoFeatures decode_features(std::string_view bytes, std::string video_id) {
  io::ByteReader r(bytes);
  if (r.get_bytes(4, "magic") != std::string_view(kFeatureMagic, 4)) {
    throw FormatError("bad magic, expected \"SOON\"", 0);
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version), 4);
  }
  const auto dtype_offset = r.position();
  const auto dtype = r.get<std::uint8_t>("dtype");
  if (dtype > 1) throw FormatError("unknown dtype code " + std::to_string(dtype), dtype_offset);
  VideoFeatures v;
  v.video_id = std::move(video_id);
  v.dtype = static_cast<Precision>(dtype);
  v.fps = r.get<double>("fps");
  const auto n = r.get<std::uint64_t>("frame count");
  const auto d = r.get<std::uint64_t>("dimension");
  const std::size_t width = v.dtype == Precision::kFloat32 ? 4 : 8;
  const std::uint64_t expected = n * d * width;
  if (r.remaining() != expected) {
    throw FormatError("payload length mismatch: expected " + std::to_string(expected) +
                          " bytes for " + std::to_string(n) + "x" + std::to_string(d) + " " +
                          precision_name(v.dtype) + ", found " + std::to_string(r.remaining()),
                      r.position());
  }
  std::vector<double> data(n * d);
  for (auto& x : data) {
    x = v.dtype == Precision::kFloat32 ? double(r.get<float>("payload")) : r.get<double>("payload");
  }
  v.features = num::Tensor<double>(num::Shape{n, d}, std::move(data));
  return v;
}

void save_features(const std::string& path, const VideoFeatures& video) {
  io::write_file(path, encode_features(video));
}

VideoFeatures load_features(const std::string& path) {
  return decode_features(io::read_file(path), fs::path(path).stem().string());
}

namespace {

std::string encode_vector(const std::vector<double>& v, Precision dtype) {
  io::ByteWriter w;
  for (double x : v) {
    if (dtype == Precision::kFloat32) {
      w.put(static_cast<float>(x));
    } else {
      w.put(x);
    }
  }
  return io::base64_encode(w.bytes());
}

}  // namespace

std::string encode_annotation(const QueryAnnotation& a, Precision dtype) {
  json j;
  j["query_id"] = a.query_id;
  j["video_id"] = a.video_id;
  j["tau_s"] = a.span.start;
  j["tau_e"] = a.span.end;
  j["dtype"] = precision_name(dtype);
  j["dim"] = a.query_vec.size();
  j["vector"] = encode_vector(a.query_vec, dtype);
  return j.dump();
}

QueryAnnotation decode_annotation(std::string_view line, std::size_t line_offset) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("annotation is not valid JSON: ") + e.what(), line_offset + e.byte);
  }
  try {
    QueryAnnotation a;
    a.query_id = j.at("query_id").get<std::string>();
    a.video_id = j.at("video_id").get<std::string>();
    a.span = Interval{j.at("tau_s").get<double>(), j.at("tau_e").get<double>()};
    const Precision dtype = parse_precision(j.at("dtype").get<std::string>());
    const auto dim = j.at("dim").get<std::size_t>();
    const std::string raw = io::base64_decode(j.at("vector").get<std::string>());
    const std::size_t width = dtype == Precision::kFloat32 ? 4 : 8;
    if (raw.size() != dim * width) {
      throw FormatError("query vector payload has " + std::to_string(raw.size()) + " bytes, expected " +
                            std::to_string(dim * width),
                        line_offset);
    }
    io::ByteReader r(raw);
    a.query_vec.resize(dim);
    for (auto& x : a.query_vec) {
      x = dtype == Precision::kFloat32 ? double(r.get<float>("query vector")) : r.get<double>("query vector");
    }
    return a;
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotation record malformed: ") + e.what(), line_offset);
  }
}

void save_dataset(const std::string& dir, const Dataset& dataset, bool overwrite) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path) && !overwrite) {
    throw UsageError("'" + manifest_path.string() + "' exists; pass --force to overwrite");
  }
  fs::create_directories(root);
  json manifest;
  manifest["format"] = "soonet-dataset";
  manifest["version"] = 1;
  manifest["dim"] = dataset.dim();
  manifest["dtype"] = precision_name(dataset.dtype);
  manifest["videos"] = json::array();
  std::string lines;
  for (const auto& v : dataset.videos) {
    const std::string file = v.video_id + ".soon";
    save_features((root / file).string(), v);
    auto it = dataset.splits.find(v.video_id);
    manifest["videos"].push_back({{"video_id", v.video_id},
                                  {"file", file},
                                  {"split", split_name(it == dataset.splits.end() ? Split::kTrain : it->second)}});
    for (const auto& q : dataset.queries_of(v.video_id)) {
      lines += encode_annotation(q, dataset.dtype);
      lines += '\n';
    }
  }
  io::write_file((root / "annotations.jsonl").string(), lines);
  io::write_file(manifest_path.string(), manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const std::string text = io::read_file((root / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest.json: ") + e.what(), e.byte);
  }
  Dataset ds;
  try {
    ds.dtype = parse_precision(manifest.at("dtype").get<std::string>());
    for (const auto& entry : manifest.at("videos")) {
      const auto id = entry.at("video_id").get<std::string>();
      VideoFeatures v = decode_features(io::read_file((root / entry.at("file").get<std::string>()).string()), id);
      ds.splits[id] = parse_split(entry.at("split").get<std::string>());
      ds.videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest.json malformed: ") + e.what(), 0);
  }
  const std::string ann = io::read_file((root / "annotations.jsonl").string());
  std::size_t pos = 0;
  while (pos < ann.size()) {
    std::size_t eol = ann.find('\n', pos);
    if (eol == std::string::npos) eol = ann.size();
    std::string_view line(ann.data() + pos, eol - pos);
    if (!line.empty()) {
      QueryAnnotation a = decode_annotation(line, pos);
      ds.annotations[a.video_id].push_back(std::move(a));
    }
    pos = eol + 1;
  }
  ds.validate();
  return ds;
}

}  // namespace soonet::data
