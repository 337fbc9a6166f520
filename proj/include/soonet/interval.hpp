#pragma once

namespace soonet {

/// Half-open time span in seconds.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

}  // namespace soonet
