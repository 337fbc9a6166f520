#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "soonet/data/dataset.hpp"

namespace soonet::data {

// Feature file, little-endian:
//   "SOON" | u32 version=1 | u8 dtype (0=f32, 1=f64) | f64 fps | u64 N | u64 D
//   | N·D values row-major
inline constexpr char kFeatureMagic[4] = {'S', 'O', 'O', 'N'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 4 + 1 + 8 + 8 + 8;

std::string encode_features(const VideoFeatures& video);
VideoFeatures decode_features(std::string_view bytes, std::string video_id);

void save_features(const std::string& path, const VideoFeatures& video);
/// The video id is the file stem.
VideoFeatures load_features(const std::string& path);

/// One JSON record per line: query_id, video_id, tau_s, tau_e, dtype, dim and
/// the query vector as base64 of its little-endian payload.
std::string encode_annotation(const QueryAnnotation& a, Precision dtype);
QueryAnnotation decode_annotation(std::string_view line, std::size_t line_offset = 0);

/// Directory layout: manifest.json, annotations.jsonl, one <video_id>.soon
/// per video.
void save_dataset(const std::string& dir, const Dataset& dataset, bool overwrite);
Dataset load_dataset(const std::string& dir);

}  // namespace soonet::data
