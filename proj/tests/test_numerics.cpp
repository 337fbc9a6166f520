#include <cmath>
#include <random>

#include "doctest.h"
#include "soonet/errors.hpp"
#include "soonet/numerics/adamw.hpp"
#include "soonet/numerics/grad_check.hpp"
#include "soonet/numerics/ops.hpp"

using namespace soonet;
using num::ParamStore;
using num::Tensor;

namespace {

Tensor<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  auto t = Tensor<double>::matrix(r, c);
  for (auto& x : t.mutable_data()) x = n(rng);
  return t;
}

// Scalar probe Σ out ⊙ R with a fixed random R.
num::Var<double> probe(num::Var<double> out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto r = random_matrix(out.rows(), out.cols(), rng);
  auto& tape = out.tape();
  return num::sum(num::mul(out, tape.constant(r.reshaped(out.shape()))));
}

num::GradCheckReport check(const num::LossBuilder& loss, const ParamStore<double>& params) {
  num::GradCheckOptions opt;
  opt.tolerance = 1e-6;
  return num::grad_check(loss, params, opt);
}

}  // namespace

TEST_CASE("tensor shape and access") {
  auto t = Tensor<double>::matrix(2, 3, 1.5);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 4.0;
  CHECK(t(1, 2) == 4.0);
  CHECK(t.row(1)[2] == 4.0);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>(3)), DimensionError);
  CHECK_THROWS_AS(t.item(), DimensionError);
  CHECK(Tensor<double>::scalar(2.0).item() == 2.0);
}

TEST_CASE("matmul matches a naive triple loop") {
  std::mt19937_64 rng(1);
  const auto a = random_matrix(4, 5, rng), b = random_matrix(5, 3, rng);
  num::Tape<double> tape;
  const auto c = num::matmul(tape.leaf(a), tape.leaf(b)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(num::matmul(tape.leaf(a), tape.leaf(a)), DimensionError);
}

TEST_CASE("layer norm and softmax against direct formulas") {
  std::mt19937_64 rng(2);
  const auto x = random_matrix(3, 6, rng, 2.0);
  const auto g = random_matrix(1, 6, rng), b = random_matrix(1, 6, rng);
  num::Tape<double> tape;
  const auto y = num::layer_norm(tape.leaf(x), tape.leaf(g), tape.leaf(b), 1e-5).value();
  const auto p = num::softmax_rows(tape.leaf(x)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0, z = 0.0, mx = -INFINITY;
    for (std::size_t c = 0; c < 6; ++c) mu += x(r, c) / 6.0;
    for (std::size_t c = 0; c < 6; ++c) var += (x(r, c) - mu) * (x(r, c) - mu) / 6.0;
    for (std::size_t c = 0; c < 6; ++c) mx = std::max(mx, x(r, c));
    for (std::size_t c = 0; c < 6; ++c) z += std::exp(x(r, c) - mx);
    for (std::size_t c = 0; c < 6; ++c) {
      CHECK(y(r, c) == doctest::Approx((x(r, c) - mu) / std::sqrt(var + 1e-5) * g(0, c) + b(0, c)).epsilon(1e-10));
      CHECK(p(r, c) == doctest::Approx(std::exp(x(r, c) - mx) / z).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax survives large logits") {
  num::Tape<double> tape;
  const auto p = num::softmax_rows(tape.leaf(Tensor<double>({1, 3}, {1000.0, 1000.0, -1000.0}))).value();
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 2) == 0.0);
}

TEST_CASE("gelu is the exact erf form") {
  num::Tape<double> tape;
  const auto y = num::gelu(tape.leaf(Tensor<double>({1, 3}, {-1.0, 0.0, 2.0}))).value();
  CHECK(y(0, 0) == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == doctest::Approx(1.9544997361036416).epsilon(1e-12));
}

TEST_CASE("primitive gradients agree with finite differences") {
  std::mt19937_64 rng(3);
  ParamStore<double> p;
  p.add("a", random_matrix(4, 6, rng));
  p.add("b", random_matrix(6, 6, rng));
  p.add("g", random_matrix(1, 6, rng));
  p.add("h", random_matrix(1, 6, rng));
  p.add("l", random_matrix(4, 1, rng));

  const std::vector<std::pair<const char*, num::LossBuilder>> cases = {
      {"matmul", [](auto&, const auto& b) { return probe(num::matmul(b["a"], b["b"]), 1); }},
      {"matmul_nt", [](auto&, const auto& b) { return probe(num::matmul_nt(b["a"], b["b"]), 2); }},
      {"layer_norm", [](auto&, const auto& b) { return probe(num::layer_norm(b["a"], b["g"], b["h"], 1e-5), 3); }},
      {"softmax_rows", [](auto&, const auto& b) { return probe(num::softmax_rows(b["a"]), 4); }},
      {"gelu", [](auto&, const auto& b) { return probe(num::gelu(b["a"]), 5); }},
      {"sigmoid", [](auto&, const auto& b) { return probe(num::sigmoid(b["a"]), 6); }},
      {"row_normalize", [](auto&, const auto& b) { return probe(num::row_normalize(b["a"], 1e-8), 7); }},
      {"add_row", [](auto&, const auto& b) { return probe(num::add_row(b["a"], b["g"]), 8); }},
      {"mean_pool", [](auto&, const auto& b) {
         return probe(num::pool_rows(b["a"], 3, 4, num::PoolKind::kMean), 9);
       }},
      {"max_pool", [](auto&, const auto& b) { return probe(num::pool_rows(b["a"], 2, 3, num::PoolKind::kMax), 10); }},
      {"segment_mean", [](auto&, const auto& b) { return probe(num::segment_mean_rows(b["a"], {0, 1, 4}), 11); }},
      {"segment_softmax_pool", [](auto&, const auto& b) {
         return probe(num::segment_softmax_pool(b["a"], b["l"], {0, 3, 4}), 12);
       }},
      {"gather_concat", [](auto&, const auto& b) {
         const std::vector<std::size_t> idx{3, 0, 3};
         std::vector<num::Var<double>> parts{num::gather_rows(b["a"], std::span<const std::size_t>(idx)),
                                             num::slice_rows(b["b"], 1, 3)};
         return probe(num::concat_rows(std::span<const num::Var<double>>(parts)), 13);
       }},
      {"attention", [](auto&, const auto& b) {
         auto qkv = num::concat_cols(num::concat_cols(b["a"], num::scale(b["a"], 0.5)), num::exp(b["a"]));
         num::AttentionLayout layout{4, {2, 0, 1, 3}, {0, 3, 4}};
         return probe(num::multihead_attention(qkv, 2, layout), 14);
       }},
  };
  for (const auto& [name, loss] : cases) {
    CAPTURE(name);
    const auto report = check(loss, p);
    CHECK(report.passed);
  }
}

TEST_CASE("gradient check rejects a corrupted adjoint") {
  std::mt19937_64 rng(4);
  ParamStore<double> p;
  p.add("a", random_matrix(3, 3, rng));
  const num::LossBuilder loss = [](auto&, const auto& b) { return probe(num::gelu(b["a"]), 1); };
  auto grads = num::analytic_gradients(loss, p);
  CHECK(num::grad_check_against(loss, p, grads).passed);
  grads[0].mutable_data()[4] += 1e-3;
  CHECK_FALSE(num::grad_check_against(loss, p, grads).passed);
}

TEST_CASE("tape runs backward once") {
  num::Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::scalar(3.0));
  auto y = num::mul(x, x);
  tape.backward(y);
  CHECK(tape.grad(x).item() == 6.0);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
  CHECK_THROWS_AS(num::mul(x, x), UsageError);
}

TEST_CASE("backward needs a scalar") {
  num::Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::matrix(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(x), UsageError);
}

TEST_CASE("operands from another tape are rejected") {
  num::Tape<double> a, b;
  auto x = a.leaf(Tensor<double>::matrix(1, 1, 1.0));
  auto y = b.leaf(Tensor<double>::matrix(1, 1, 1.0));
  CHECK_THROWS_AS(num::add(x, y), UsageError);
}

TEST_CASE("require_finite flags NaN and infinity") {
  const std::vector<double> ok{1.0, 2.0}, bad{1.0, NAN}, inf{INFINITY};
  CHECK_NOTHROW(num::require_finite(std::span<const double>(ok), "t"));
  CHECK_THROWS_AS(num::require_finite(std::span<const double>(bad), "t"), NumericError);
  CHECK_THROWS_AS(num::require_finite(std::span<const double>(inf), "t"), NumericError);
}

TEST_CASE("AdamW first step moves by lr against the gradient sign") {
  ParamStore<double> p;
  p.add("w", Tensor<double>({1, 3}, {1.0, -2.0, 0.5}));
  num::AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  num::AdamW<double> opt(cfg);
  opt.step(p, {Tensor<double>({1, 3}, {0.3, -4.0, 0.0})});
  const auto w = p.at("w");
  // Bias-corrected first step: m̂/√v̂ = sign(g), up to eps.
  CHECK(w(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(w(0, 1) == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(w(0, 2) == 0.5);
  CHECK(opt.steps() == 1);
}

TEST_CASE("AdamW decoupled decay, freezing and lr decay") {
  ParamStore<double> p;
  p.add("w", Tensor<double>({1, 1}, {2.0}));
  p.add("f", Tensor<double>({1, 1}, {2.0}));
  num::AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  cfg.decay_after = 1;
  num::AdamW<double> opt(cfg);
  const std::vector<Tensor<double>> zero{Tensor<double>({1, 1}), Tensor<double>({1, 1})};
  opt.step(p, zero, {false, true});
  CHECK(p.at("w")(0, 0) == doctest::Approx(2.0 * (1.0 - 0.05)));
  CHECK(p.at("f")(0, 0) == 2.0);
  CHECK(opt.current_lr() == doctest::Approx(0.1));
  opt.step(p, zero, {false, true});
  CHECK(opt.current_lr() == doctest::Approx(0.01));
  CHECK_THROWS_AS(opt.step(p, {Tensor<double>({1, 1})}), UsageError);
}
