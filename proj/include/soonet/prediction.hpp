#pragma once

#include <cstddef>

#include "soonet/interval.hpp"

namespace soonet {

/// A final grounding result: adjusted interval, its score and the anchor it
/// came from (global index, or a proposal id for baselines).
struct Prediction {
  Interval span;
  double score = 0.0;
  std::size_t source = 0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

}  // namespace soonet
