#include "soonet/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace soonet::num {
namespace {

double evaluate(const LossBuilder& loss, const ParamStore<double>& params) {
  Tape<double> tape;
  BoundParams<double> bound(tape, params, false);
  const Var<double> out = loss(tape, bound);
  if (out.size() != 1) throw UsageError("grad_check: loss must be scalar");
  return out.value().data()[0];
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (limit == 0 || limit >= n) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

std::vector<Tensor<double>> analytic_gradients(const LossBuilder& loss,
                                               const ParamStore<double>& params) {
  Tape<double> tape;
  BoundParams<double> bound(tape, params, true);
  const Var<double> out = loss(tape, bound);
  tape.backward(out);
  std::vector<Tensor<double>> grads;
  grads.reserve(params.size());
  for (const auto& v : bound.vars()) grads.push_back(tape.grad(v));
  return grads;
}

GradCheckReport grad_check_against(const LossBuilder& loss, const ParamStore<double>& params,
                                   const std::vector<Tensor<double>>& analytic,
                                   const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ParameterError("grad_check: step must be positive");
  if (analytic.size() != params.size()) throw UsageError("grad_check: one gradient per parameter");

  const double base = evaluate(loss, params);
  if (evaluate(loss, params) != base) {
    throw CheckError("grad_check: loss is not deterministic (repeated evaluation differs)");
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  ParamStore<double> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckEntry entry;
    entry.name = params.name(p);
    const auto coords = pick_coords(params.tensor(p).size(), options.max_coords_per_tensor, rng);
    double max_diff = 0.0, max_mag = 0.0;
    for (std::size_t c : coords) {
      auto data = probe.mutable_tensor(p).mutable_data();
      const double orig = data[c];
      data[c] = orig + options.step;
      const double up = evaluate(loss, probe);
      probe.mutable_tensor(p).mutable_data()[c] = orig - options.step;
      const double down = evaluate(loss, probe);
      probe.mutable_tensor(p).mutable_data()[c] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[p].data()[c];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      max_mag = std::max({max_mag, std::abs(a), std::abs(numeric)});
    }
    entry.coords_checked = coords.size();
    entry.max_abs_error = max_diff;
    entry.rel_error = max_mag > 1e-12 ? max_diff / max_mag : max_diff;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

GradCheckReport grad_check(const LossBuilder& loss, const ParamStore<double>& params,
                           const GradCheckOptions& options) {
  return grad_check_against(loss, params, analytic_gradients(loss, params), options);
}

}  // namespace soonet::num
