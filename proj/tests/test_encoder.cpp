#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "soonet/encoder/encoder.hpp"
#include "soonet/errors.hpp"

using namespace soonet;
using num::Tensor;

namespace {

struct MsaFixture {
  num::ParamStore<double> store;
  std::size_t dim;

  MsaFixture(std::size_t d, std::uint64_t seed) : dim(d) {
    std::mt19937_64 rng(seed);
    enc::add_msa_params(store, "m", d, rng);
    std::normal_distribution<double> n(0.0, 0.3);
    for (const char* b : {"m.qkv.b", "m.out.b"}) {
      for (auto& v : store.mutable_at(b).mutable_data()) v = n(rng);
    }
  }

  Tensor<double> dense(const Tensor<double>& x, std::size_t heads) const {
    return oracle::dense_mha(x, store.at("m.qkv.w"), store.at("m.qkv.b"), store.at("m.out.w"), store.at("m.out.b"),
                             heads);
  }

  Tensor<double> windowed(const Tensor<double>& x, std::size_t window, std::size_t shift, std::size_t heads,
                          std::size_t valid) const {
    num::Tape<double> tape;
    num::BoundParams<double> p(tape, store, false);
    enc::EncoderConfig cfg;
    cfg.window = window;
    cfg.shift = shift;
    cfg.heads = heads;
    return enc::window_msa(tape.leaf(x, false), enc::bind_msa(p, "m"), cfg, shift, valid).value();
  }
};

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("one window covering the sequence equals dense attention") {
  for (std::size_t s : {1u, 3u, 8u, 17u, 64u}) {
    CAPTURE(s);
    MsaFixture f(8, s);
    std::mt19937_64 rng(100 + s);
    const auto x = oracle::random_matrix(s, 8, rng);
    for (std::size_t window : {s, s + 5}) {
      CHECK(max_abs_diff(f.windowed(x, window, 0, 2, s), f.dense(x, 2)) <= 1e-10);
    }
  }
}

TEST_CASE("shift is ignored when the sequence fits one window") {
  MsaFixture f(8, 7);
  std::mt19937_64 rng(7);
  const auto x = oracle::random_matrix(6, 8, rng);
  CHECK(max_abs_diff(f.windowed(x, 8, 4, 4, 6), f.dense(x, 4)) <= 1e-10);
}

TEST_CASE("each plain window equals dense attention on its rows") {
  MsaFixture f(8, 9);
  std::mt19937_64 rng(9);
  const std::size_t s = 11, w = 4;
  const auto x = oracle::random_matrix(s, 8, rng);
  const auto y = f.windowed(x, w, 0, 2, s);
  for (std::size_t lo = 0; lo < s; lo += w) {
    const std::size_t hi = std::min(lo + w, s);
    auto part = Tensor<double>::matrix(hi - lo, 8);
    for (std::size_t r = lo; r < hi; ++r) {
      for (std::size_t c = 0; c < 8; ++c) part.at(r - lo, c) = x(r, c);
    }
    const auto ref = f.dense(part, 2);
    for (std::size_t r = lo; r < hi; ++r) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(y(r, c) - ref(r - lo, c)) <= 1e-10);
    }
  }
}

TEST_CASE("shifted windows attend across the plain window boundary") {
  MsaFixture f(8, 11);
  std::mt19937_64 rng(11);
  const std::size_t s = 16, w = 4;
  auto x = oracle::random_matrix(s, 8, rng);
  const auto before_plain = f.windowed(x, w, 0, 2, s);
  const auto before_shift = f.windowed(x, w, 2, 2, s);
  for (std::size_t c = 0; c < 8; ++c) x.at(4, c) += 1.0;  // first row of the second plain window
  const auto after_plain = f.windowed(x, w, 0, 2, s);
  const auto after_shift = f.windowed(x, w, 2, 2, s);
  // Row 3 sits in the first plain window but shares a shifted window with row 4.
  CHECK(std::abs(after_plain(3, 0) - before_plain(3, 0)) == 0.0);
  CHECK(std::abs(after_shift(3, 0) - before_shift(3, 0)) > 1e-6);
}

TEST_CASE("window layout visits every valid row once and never mixes across the seam") {
  for (std::size_t valid : {1u, 5u, 8u, 13u, 40u}) {
    for (std::size_t window : {1u, 3u, 8u}) {
      for (std::size_t shift : {0u, 1u, 4u}) {
        const auto layout = enc::window_layout(valid + 2, valid, window, shift);
        std::multiset<std::size_t> seen(layout.order.begin(), layout.order.end());
        CHECK(seen.size() == valid);
        for (std::size_t r = 0; r < valid; ++r) CHECK(seen.count(r) == 1);
        for (std::size_t s = 0; s + 1 < layout.segments.size(); ++s) {
          const std::size_t lo = layout.segments[s], hi = layout.segments[s + 1];
          CHECK(hi - lo <= window);
          // Inside a segment the original rows are consecutive.
          for (std::size_t p = lo + 1; p < hi; ++p) CHECK(layout.order[p] == layout.order[p - 1] + 1);
        }
      }
    }
  }
  CHECK_THROWS_AS(enc::window_layout(3, 4, 2, 0), DimensionError);
  CHECK_THROWS_AS(enc::window_layout(3, 3, 0, 0), ParameterError);
}

TEST_CASE("padding rows do not change valid outputs") {
  MsaFixture f(8, 13);
  std::mt19937_64 rng(13);
  const auto x = oracle::random_matrix(10, 8, rng);
  auto padded = Tensor<double>::matrix(14, 8);
  for (std::size_t r = 0; r < 14; ++r) {
    for (std::size_t c = 0; c < 8; ++c) padded.at(r, c) = r < 10 ? x(r, c) : 50.0;
  }
  const auto a = f.windowed(x, 4, 2, 2, 10);
  const auto b = f.windowed(padded, 4, 2, 2, 10);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(a(r, c) - b(r, c)) <= 1e-12);
  }
}

TEST_CASE("multiscale encoder row counts follow the pooling factors") {
  num::ParamStore<double> store;
  std::mt19937_64 rng(17);
  const std::vector<std::size_t> pools{1, 2, 2};
  for (std::size_t l = 0; l < pools.size(); ++l) enc::add_swin_params(store, "b" + std::to_string(l), 8, 16, rng);
  num::Tape<double> tape;
  num::BoundParams<double> p(tape, store, false);
  std::vector<enc::SwinBlockWeights<double>> blocks;
  for (std::size_t l = 0; l < pools.size(); ++l) blocks.push_back(enc::bind_swin(p, "b" + std::to_string(l)));
  enc::EncoderConfig cfg;
  cfg.window = 4;
  cfg.shift = 2;
  cfg.heads = 2;
  const auto ms = enc::encode_multiscale(tape.leaf(oracle::random_matrix(13, 8, rng), false), 13, blocks, pools, cfg);
  REQUIRE(ms.features.size() == 3);
  CHECK(ms.features[0].rows() == 13);
  CHECK(ms.features[1].rows() == 7);
  CHECK(ms.features[2].rows() == 4);
  CHECK(ms.valid_rows == std::vector<std::size_t>{13, 7, 4});
  for (const auto& f : ms.features) {
    CHECK_NOTHROW(num::require_finite(f.value().data(), "encoder"));
  }
  const std::vector<std::size_t> short_pools{1, 2};
  CHECK_THROWS_AS(
      enc::encode_multiscale(tape.leaf(oracle::random_matrix(4, 8, rng), false), 4, blocks, short_pools, cfg),
      DimensionError);
}

TEST_CASE("encoder config validation") {
  enc::EncoderConfig cfg;
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(8), ParameterError);
  cfg.heads = 2;
  cfg.window = 0;
  CHECK_THROWS_AS(cfg.validate(8), ParameterError);
}
