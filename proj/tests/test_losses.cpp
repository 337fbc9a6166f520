#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "soonet/errors.hpp"
#include "soonet/losses/losses.hpp"
#include "soonet/numerics/grad_check.hpp"

using namespace soonet;
using num::Tensor;

namespace {

double loss_value(const Tensor<double>& s, const Tensor<double>& y, const loss::Mask& mask, double alpha,
                  bool cols = false, bool dual = false) {
  num::Tape<double> tape;
  auto v = tape.leaf(s);
  if (dual) return loss::dual_rank_loss(v, y, mask, alpha).value().item();
  if (cols) return loss::rank_loss_cols(v, y, mask, alpha).value().item();
  return loss::rank_loss_rows(v, y, mask, alpha).value().item();
}

Tensor<double> transpose(const Tensor<double>& t) {
  auto out = Tensor<double>::matrix(t.cols(), t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) out.at(c, r) = t(r, c);
  }
  return out;
}

Tensor<double> random_labels(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto t = Tensor<double>::matrix(r, c);
  for (auto& x : t.mutable_data()) x = u(rng) < 0.6 ? 0.0 : u(rng);
  return t;
}

}  // namespace

TEST_CASE("approx_rank reaches true ranks for a large temperature") {
  const std::vector<double> s{0.9, 0.5, 0.1};
  const auto pi = loss::approx_rank(s, 1000.0);
  CHECK(pi[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(pi[1] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(pi[2] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK_THROWS_AS(loss::approx_rank(s, 0.0), ParameterError);
  CHECK_THROWS_AS(loss::approx_rank(s, -1.0), ParameterError);
}

TEST_CASE("approx_rank sums to the sum of true ranks at any temperature") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double alpha : {0.01, 1.0, 50.0}) {
    std::vector<double> s(12);
    for (auto& x : s) x = u(rng);
    const auto pi = loss::approx_rank(s, alpha);
    double total = 0.0;
    for (double p : pi) total += p;
    CHECK(total == doctest::Approx(12.0 * 13.0 / 2.0));
  }
}

TEST_CASE("approx_rank stays finite for extreme temperatures") {
  const std::vector<double> s{1.0, -1.0, 0.5};
  for (double alpha : {1e-9, 1e9}) {
    const auto pi = loss::approx_rank(s, alpha);
    for (double p : pi) CHECK(std::isfinite(p));
  }
}

TEST_CASE("ApproxNDCG loss examples") {
  const std::vector<double> y{1.0, 0.0};
  const std::vector<double> ordered{0.9, 0.1}, reversed{0.1, 0.9};
  CHECK(loss::approx_ndcg_loss(ordered, y, 1000.0) <= 1e-3);
  CHECK(loss::approx_ndcg_loss(reversed, y, 1000.0) == doctest::Approx(1.0 - std::log(2.0) / std::log(3.0)).epsilon(1e-3));
  const std::vector<double> zero{0.0, 0.0};
  CHECK(loss::approx_ndcg_loss(ordered, zero, 1.0) == 0.0);
  CHECK(loss::ideal_dcg(y) == doctest::Approx(1.0 / std::log(2.0)));
  const std::vector<double> short_y{1.0};
  CHECK_THROWS_AS(loss::approx_ndcg_loss(ordered, short_y, 1.0), UsageError);
}

TEST_CASE("ApproxNDCG loss is bounded on random instances") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t k = 2 + t % 20;
    std::vector<double> s(k), y(k);
    for (auto& x : s) x = u(rng);
    for (auto& x : y) x = u(rng) < 0.5 ? 0.0 : u(rng);
    const double alpha = 0.01 + 0.49 * u(rng);
    const double l = loss::approx_ndcg_loss(s, y, alpha);
    CHECK(l < 1.0);
    CHECK(l >= -0.05);
  }
}

TEST_CASE("row loss on the tape equals the mean of per-row losses") {
  std::mt19937_64 rng(35);
  const auto s = oracle::random_matrix(4, 9, rng);
  const auto y = random_labels(4, 9, rng);
  loss::Mask mask(36, 1);
  for (std::size_t i = 0; i < 36; i += 5) mask[i] = 0;
  for (double alpha : {0.01, 3.0, 5000.0}) {
    double expect_rows = 0.0, expect_cols = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<double> sr, yr;
      for (std::size_t c = 0; c < 9; ++c) {
        if (mask[r * 9 + c]) {
          sr.push_back(s(r, c));
          yr.push_back(y(r, c));
        }
      }
      expect_rows += loss::approx_ndcg_loss(sr, yr, alpha) / 4.0;
    }
    for (std::size_t c = 0; c < 9; ++c) {
      std::vector<double> sc, yc;
      for (std::size_t r = 0; r < 4; ++r) {
        if (mask[r * 9 + c]) {
          sc.push_back(s(r, c));
          yc.push_back(y(r, c));
        }
      }
      expect_cols += loss::approx_ndcg_loss(sc, yc, alpha) / 9.0;
    }
    CHECK(loss_value(s, y, mask, alpha) == doctest::Approx(expect_rows).epsilon(1e-10));
    CHECK(loss_value(s, y, mask, alpha, true) == doctest::Approx(expect_cols).epsilon(1e-10));
    CHECK(loss_value(s, y, mask, alpha, false, true) == doctest::Approx(expect_rows + expect_cols).epsilon(1e-10));
  }
}

TEST_CASE("dual loss examples") {
  const Tensor<double> s({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(loss_value(s, s, {}, 1000.0, false, true) <= 1e-3);

  std::mt19937_64 rng(37);
  const auto a = oracle::random_matrix(3, 5, rng);
  const auto y = random_labels(3, 5, rng);
  CHECK(loss_value(a, y, {}, 2.0, false, true) ==
        doctest::Approx(loss_value(transpose(a), transpose(y), {}, 2.0, false, true)).epsilon(1e-12));

  // One query: every column has a single entry and contributes nothing.
  const auto a1 = oracle::random_matrix(1, 6, rng);
  const auto y1 = random_labels(1, 6, rng);
  CHECK(loss_value(a1, y1, {}, 2.0, false, true) == doctest::Approx(loss_value(a1, y1, {}, 2.0)).epsilon(1e-12));

  const auto bad = Tensor<double>::matrix(2, 3);
  num::Tape<double> tape;
  CHECK_THROWS_AS(loss::dual_rank_loss(tape.leaf(s), bad, {}, 1.0), UsageError);
}

TEST_CASE("ranking loss gradients agree with finite differences") {
  std::mt19937_64 rng(39);
  num::ParamStore<double> p;
  p.add("s", oracle::random_matrix(3, 6, rng, 0.3));
  const auto y = random_labels(3, 6, rng);
  loss::Mask mask(18, 1);
  mask[2] = mask[7] = 0;
  for (double alpha : {0.01, 1.0, 10.0}) {
    CAPTURE(alpha);
    num::GradCheckOptions opt;
    opt.tolerance = 1e-6;
    const num::LossBuilder dual = [&](auto&, const auto& b) { return loss::dual_rank_loss(b["s"], y, mask, alpha); };
    CHECK(num::grad_check(dual, p, opt).passed);
  }
  num::GradCheckOptions opt;
  opt.tolerance = 1e-6;
  Tensor<double> probs = p.at("s");
  for (auto& x : probs.mutable_data()) x = 1.0 / (1.0 + std::exp(-x));
  num::ParamStore<double> q;
  q.add("s", probs);
  const num::LossBuilder bce = [&](auto&, const auto& b) { return loss::bce_loss(b["s"], y, mask); };
  const num::LossBuilder nce = [&](auto&, const auto& b) { return loss::nce_loss(b["s"], y, mask, 0.1); };
  CHECK(num::grad_check(bce, q, opt).passed);
  CHECK(num::grad_check(nce, p, opt).passed);
}

TEST_CASE("binary cross-entropy against soft labels") {
  const Tensor<double> s({1, 3}, {0.8, 0.3, 0.5});
  const Tensor<double> y({1, 3}, {1.0, 0.0, 0.4});
  num::Tape<double> tape;
  const double got = loss::bce_loss(tape.leaf(s), y, {}).value().item();
  const double expect = -(std::log(0.8) + std::log(0.7) + 0.4 * std::log(0.5) + 0.6 * std::log(0.5)) / 3.0;
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("NCE picks the highest label as the positive") {
  const Tensor<double> s({2, 3}, {0.2, 0.5, 0.1, 0.3, 0.3, 0.3});
  const Tensor<double> y({2, 3}, {0.1, 0.7, 0.0, 0.0, 0.0, 0.0});
  num::Tape<double> tape;
  const double got = loss::nce_loss(tape.leaf(s), y, {}, 0.5).value().item();
  const double z = std::exp(0.4) + std::exp(1.0) + std::exp(0.2);
  CHECK(got == doctest::Approx(-(1.0 - std::log(z))).epsilon(1e-12));
  CHECK_THROWS_AS(loss::nce_loss(tape.leaf(s), y, {}, 0.0), ParameterError);
}

TEST_CASE("IoU regression loss") {
  const std::vector<Interval> anchors{{0.0, 10.0}, {10.0, 20.0}, {40.0, 50.0}};
  const std::vector<Interval> gts{{0.0, 10.0}, {12.0, 22.0}, {0.0, 5.0}};
  const Tensor<double> delta({3, 2}, {0.0, 0.0, 0.2, 0.2, 0.5, -0.5});
  num::Tape<double> tape;
  const double got = loss::iou_loss(tape.leaf(delta), anchors, gts).value().item();
  // Third pair does not overlap before adjustment and is left out.
  CHECK(got == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(got == doctest::Approx(loss::iou_loss_reference(delta.data(), anchors, gts)).epsilon(1e-12));

  const Tensor<double> off({3, 2}, {0.1, 0.0, 0.0, 0.0, 0.0, 0.0});
  num::Tape<double> t2;
  const double l2 = loss::iou_loss(t2.leaf(off), anchors, gts).value().item();
  const double expect = (-std::log(9.0 / 10.0) - std::log(8.0 / 12.0)) / 2.0;
  CHECK(l2 == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("IoU loss floors disjoint predictions") {
  const std::vector<Interval> anchors{{0.0, 10.0}};
  const std::vector<Interval> gts{{8.0, 10.0}};
  const Tensor<double> delta({1, 2}, {-5.0, -1.0});  // moves the anchor fully left of the truth
  num::Tape<double> tape;
  const double got = loss::iou_loss(tape.leaf(delta), anchors, gts).value().item();
  CHECK(std::isfinite(got));
  CHECK(got <= -std::log(loss::kIouFloor) + 1e-9);
}

TEST_CASE("IoU loss gradient agrees with finite differences") {
  std::mt19937_64 rng(41);
  num::ParamStore<double> p;
  p.add("d", oracle::random_matrix(4, 2, rng, 0.1));
  const std::vector<Interval> anchors{{0, 10}, {5, 15}, {20, 40}, {30, 35}};
  const std::vector<Interval> gts{{2, 9}, {6, 20}, {25, 31}, {31, 38}};
  num::GradCheckOptions opt;
  opt.tolerance = 1e-6;
  const num::LossBuilder l = [&](auto&, const auto& b) { return loss::iou_loss(b["d"], anchors, gts); };
  CHECK(num::grad_check(l, p, opt).passed);
}

TEST_CASE("total loss weights the parts") {
  num::Tape<double> tape;
  auto a = tape.leaf(Tensor<double>::scalar(0.3));
  auto r = tape.leaf(Tensor<double>::scalar(0.5));
  CHECK(loss::total_loss(a, r, 1.0, 20.0).value().item() == doctest::Approx(10.3));
  CHECK(loss::total_loss(a, r, 1.0, 0.0).value().item() == doctest::Approx(0.3));
}

TEST_CASE("rank loss names round trip") {
  for (auto k : {loss::RankLoss::kDual, loss::RankLoss::kSingle, loss::RankLoss::kBce, loss::RankLoss::kNce}) {
    CHECK(loss::parse_rank_loss(loss::rank_loss_name(k)) == k);
  }
  CHECK_THROWS_AS(loss::parse_rank_loss("focal"), ParameterError);
}
