#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "soonet/numerics/param_store.hpp"
#include "soonet/numerics/tape.hpp"

namespace soonet::num {

/// Builds a scalar loss on `tape` from the bound parameters. Must be a pure
/// function of the parameter values.
using LossBuilder = std::function<Var<double>(Tape<double>& tape, const BoundParams<double>& params)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  /// 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coords_checked = 0;
  double max_abs_error = 0.0;
  /// max |analytic - numeric| over the tensor, divided by the largest
  /// gradient magnitude in the tensor.
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares reverse-mode gradients with central finite differences.
/// Throws CheckError if two evaluations at the same point disagree.
GradCheckReport grad_check(const LossBuilder& loss, const ParamStore<double>& params,
                           const GradCheckOptions& options = {});

/// Same comparison against caller-supplied analytic gradients, one tensor per
/// parameter. Lets tests feed a corrupted adjoint as a negative control.
GradCheckReport grad_check_against(const LossBuilder& loss, const ParamStore<double>& params,
                                   const std::vector<Tensor<double>>& analytic,
                                   const GradCheckOptions& options = {});

/// Reverse-mode gradient of `loss` for every parameter.
std::vector<Tensor<double>> analytic_gradients(const LossBuilder& loss,
                                               const ParamStore<double>& params);

}  // namespace soonet::num
