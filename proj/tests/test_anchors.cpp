#include <random>

#include "doctest.h"
#include "soonet/anchors/anchors.hpp"
#include "soonet/errors.hpp"

using namespace soonet;
using anchors::AnchorGrid;

TEST_CASE("anchor lengths follow the pooling factors") {
  const std::vector<std::size_t> r{1, 2, 2, 2};
  CHECK(anchors::anchor_lengths(10, r) == std::vector<std::size_t>{10, 20, 40, 80});
  const std::vector<std::size_t> bad{1, 0};
  CHECK_THROWS_AS(anchors::anchor_lengths(10, bad), ParameterError);
  CHECK_THROWS_AS(anchors::anchor_lengths(0, r), ParameterError);
}

TEST_CASE("grid counts on an exact multiple") {
  const AnchorGrid g(2000, 5.0, 10, {1, 2, 2, 2});
  CHECK(g.scale_count() == 4);
  CHECK(g.count(0) == 200);
  CHECK(g.count(1) == 100);
  CHECK(g.count(2) == 50);
  CHECK(g.count(3) == 25);
  CHECK(g.total() == 375);
  CHECK(g.offset(2) == 300);
  CHECK(g.bounds(3, 24).start == doctest::Approx(384.0));
  CHECK(g.bounds(3, 24).end == doctest::Approx(400.0));
  for (const auto& a : g.anchors()) CHECK_FALSE(a.padded);
}

TEST_CASE("padded tail anchor is clamped to the video") {
  const AnchorGrid g(45, 1.0, 10, {1, 2});
  CHECK(g.count(0) == 5);
  CHECK(g.count(1) == 3);
  const auto& last = g.at(0, 4);
  CHECK(last.padded);
  CHECK(last.frame_count() == 5);
  CHECK(last.bounds.end == doctest::Approx(45.0));
  CHECK(g.at(1, 2).frame_count() == 5);
  CHECK_THROWS_AS(g.at(1, 3), UsageError);
}

TEST_CASE("anchors of every scale tile the video without overlap") {
  for (std::size_t n : {1u, 9u, 10u, 11u, 159u, 160u, 1234u}) {
    const AnchorGrid g(n, 2.0, 10, {1, 2, 2, 2});
    for (std::size_t s = 0; s < g.scale_count(); ++s) {
      std::size_t covered = 0;
      for (std::size_t i = 0; i < g.count(s); ++i) {
        const auto& a = g.at(s, i);
        CHECK(a.frame_lo == covered);
        CHECK(a.frame_hi > a.frame_lo);
        covered = a.frame_hi;
      }
      CHECK(covered == n);
    }
  }
}

TEST_CASE("grid rejects bad input") {
  CHECK_THROWS_AS(AnchorGrid(0, 1.0, 10, {1}), UsageError);
  CHECK_THROWS_AS(AnchorGrid(10, 0.0, 10, {1}), ParameterError);
  CHECK_THROWS_AS(AnchorGrid(10, 1.0, 10, {}), ParameterError);
}

TEST_CASE("temporal IoU examples") {
  CHECK(anchors::temporal_iou({0, 10}, {5, 15}) == doctest::Approx(1.0 / 3.0));
  CHECK(anchors::temporal_iou({0, 10}, {0, 10}) == 1.0);
  CHECK(anchors::temporal_iou({0, 10}, {10, 20}) == 0.0);
  CHECK(anchors::temporal_iou({0, 10}, {2, 4}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(anchors::temporal_iou({3, 3}, {0, 1}), UsageError);
}

TEST_CASE("temporal IoU is symmetric and bounded") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a == b || c == d) continue;
    const Interval x{std::min(a, b), std::max(a, b)}, y{std::min(c, d), std::max(c, d)};
    const double v = anchors::temporal_iou(x, y);
    CHECK(v == anchors::temporal_iou(y, x));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("partition_base equals a strided convolution with zero padding") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t frames = 7, d = 3, c = 3;
  auto x = num::Tensor<double>::matrix(frames, d);
  auto w = num::Tensor<double>::matrix(c * d, d);
  auto b = num::Tensor<double>::matrix(1, d);
  for (auto* t : {&x, &w, &b}) {
    for (auto& v : t->mutable_data()) v = n(rng);
  }
  num::Tape<double> tape;
  const auto y = anchors::partition_base(tape.leaf(x), c, tape.leaf(w), tape.leaf(b)).value();
  REQUIRE(y.rows() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t o = 0; o < d; ++o) {
      double s = b(0, o);
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t f = i * c + k;
        if (f >= frames) continue;
        for (std::size_t ch = 0; ch < d; ++ch) s += x(f, ch) * w(k * d + ch, o);
      }
      CHECK(y(i, o) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}
