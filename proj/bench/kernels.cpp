// Serial reference vs OpenMP kernels. Thread count is the benchmark argument.

#include <benchmark/benchmark.h>

#include <random>

#include "soonet/bench/bench.hpp"
#include "soonet/data/synthetic.hpp"
#include "soonet/model/model.hpp"

using namespace soonet;

namespace {

struct WindowSet {
  std::vector<num::Tensor<float>> windows;
  std::vector<float> query;
};

const WindowSet& window_set() {
  static const WindowSet set = [] {
    WindowSet s;
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (int k = 0; k < 256; ++k) {
      auto w = num::Tensor<float>::matrix(128, 64);
      for (auto& x : w.mutable_data()) x = n(rng);
      s.windows.push_back(std::move(w));
    }
    for (int j = 0; j < 64; ++j) s.query.push_back(n(rng));
    return s;
  }();
  return set;
}

void BM_sliding_scores_reference(benchmark::State& state) {
  const auto& s = window_set();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bench::sliding_scores_reference<float>(s.windows, s.query, 8));
  }
}
BENCHMARK(BM_sliding_scores_reference)->Unit(benchmark::kMillisecond);

void BM_sliding_scores(benchmark::State& state) {
  const auto& s = window_set();
  const int threads = int(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(bench::sliding_scores<float>(s.windows, s.query, 8, threads));
  }
}
BENCHMARK(BM_sliding_scores)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

struct EvalSet {
  model::ModelConfig config;
  num::ParamStore<double> params;
  data::Dataset dataset;
};

const EvalSet& eval_set() {
  static const EvalSet set = [] {
    EvalSet s;
    s.params = model::init_params(s.config, 1);
    s.dataset = data::generate_synthetic(data::mad_like_preset(2, 4000, 64, 32));
    return s;
  }();
  return set;
}

void BM_evaluate(benchmark::State& state) {
  const auto& s = eval_set();
  model::EvalOptions options;
  options.use_f32 = true;
  options.threads = int(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(model::evaluate(s.params, s.config, s.dataset, options));
}
BENCHMARK(BM_evaluate)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
