#include "soonet/data/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "soonet/errors.hpp"

namespace soonet::data {

Batch sample_batch(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  std::vector<const VideoFeatures*> candidates;
  for (const auto& v : dataset.videos) {
    if (!dataset.queries_of(v.video_id).empty()) candidates.push_back(&v);
  }
  if (candidates.empty()) throw UsageError("cannot sample from a dataset without annotated videos");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_video(0, candidates.size() - 1);
  Batch batch;
  batch.video = candidates[pick_video(rng)];
  const auto& pool = dataset.queries_of(batch.video->video_id);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  if (pool.size() >= batch_size) {
    order.resize(batch_size);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    while (order.size() < batch_size) order.push_back(pick(rng));
  }
  batch.queries.reserve(batch_size);
  for (std::size_t i : order) batch.queries.push_back(pool[i]);
  return batch;
}

}  // namespace soonet::data
