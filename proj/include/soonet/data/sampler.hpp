#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "soonet/data/dataset.hpp"

namespace soonet::data {

/// One training step's worth of data: a single video and queries grounded in it.
struct Batch {
  const VideoFeatures* video = nullptr;
  std::vector<QueryAnnotation> queries;
};

/// Picks one annotated video uniformly, then `batch_size` of its queries:
/// distinct when the video has enough, otherwise every query once followed
/// by uniform draws with replacement. Deterministic given `seed`.
Batch sample_batch(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed);

}  // namespace soonet::data
