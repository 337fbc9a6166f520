#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "soonet/numerics/param_store.hpp"

namespace soonet::num {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Multiply lr by decay_factor once step count reaches decay_after (0 = never).
  std::size_t decay_after = 0;
  double decay_factor = 0.1;
};

/// Decoupled-weight-decay Adam. Moments live in ParamStores so they can be
/// checkpointed next to the weights.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Tensors flagged in `frozen` are left untouched, decay included.
  void step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads,
            const std::vector<bool>& frozen = {}) {
    if (grads.size() != params.size()) throw UsageError("AdamW: one gradient per parameter");
    if (!frozen.empty() && frozen.size() != params.size()) throw UsageError("AdamW: frozen mask size");
    if (first_.size() == 0) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        first_.add(params.name(i), Tensor<T>(params.tensor(i).shape()));
        second_.add(params.name(i), Tensor<T>(params.tensor(i).shape()));
      }
    }
    ++steps_;
    const double lr = current_lr();
    const double c1 = 1.0 - std::pow(config_.beta1, double(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, double(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!frozen.empty() && frozen[i]) continue;
      auto w = params.mutable_tensor(i).mutable_data();
      auto m = first_.mutable_tensor(i).mutable_data();
      auto v = second_.mutable_tensor(i).mutable_data();
      const auto g = grads[i].data();
      if (g.size() != w.size()) throw DimensionError("AdamW: gradient shape mismatch for " + params.name(i));
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = double(g[k]);
        const double mk = config_.beta1 * double(m[k]) + (1.0 - config_.beta1) * gk;
        const double vk = config_.beta2 * double(v[k]) + (1.0 - config_.beta2) * gk * gk;
        m[k] = T(mk);
        v[k] = T(vk);
        const double update = (mk / c1) / (std::sqrt(vk / c2) + config_.eps);
        w[k] = T(double(w[k]) * (1.0 - lr * config_.weight_decay) - lr * update);
      }
    }
  }

  double current_lr() const {
    if (config_.decay_after > 0 && steps_ > config_.decay_after) return config_.lr * config_.decay_factor;
    return config_.lr;
  }

  std::uint64_t steps() const { return steps_; }
  const ParamStore<T>& first_moments() const { return first_; }
  const ParamStore<T>& second_moments() const { return second_; }

  void restore(std::uint64_t steps, ParamStore<T> first, ParamStore<T> second) {
    steps_ = steps;
    first_ = std::move(first);
    second_ = std::move(second);
  }

 private:
  AdamWConfig config_;
  std::uint64_t steps_ = 0;
  ParamStore<T> first_;
  ParamStore<T> second_;
};

}  // namespace soonet::num
