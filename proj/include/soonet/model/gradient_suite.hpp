#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "soonet/numerics/grad_check.hpp"

namespace soonet::model {

struct GradientCase {
  std::string name;
  std::uint64_t seed = 0;
  num::GradCheckReport report;
};

struct GradientSuiteReport {
  std::vector<GradientCase> cases;
  double tolerance = 0.0;
  bool passed = false;

  std::string json() const;
};

/// Names of every checked layer and loss, in run order.
const std::vector<std::string>& gradient_case_names();

/// Finite-difference check of every layer and loss at 64-bit on small random
/// instances, once per seed. Layers are reduced to a scalar through a fixed
/// random projection of their output.
GradientSuiteReport run_gradient_suite(std::size_t seeds, double tolerance, std::uint64_t base_seed = 0);

/// One case by name.
GradientCase run_gradient_case(const std::string& name, std::uint64_t seed, double tolerance);

}  // namespace soonet::model
