#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "soonet/anchors/anchors.hpp"
#include "soonet/ranking/ranking.hpp"

using namespace soonet;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace

TEST_CASE("context scores are sigmoid of cosine similarity") {
  std::mt19937_64 rng(21);
  const auto e = oracle::random_matrix(9, 5, rng);
  const auto q = oracle::random_matrix(1, 5, rng);
  const auto s = rank::context_scores(e, q.row(0));
  REQUIRE(s.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(s[i] == doctest::Approx(sigmoid(cosine(e.row(i), q.row(0)))).epsilon(1e-7));
}

TEST_CASE("context scores of a parallel anchor reach sigmoid(1)") {
  const num::Tensor<double> e({2, 2}, {3.0, 0.0, -1.0, 0.0});
  const std::vector<double> q{1.0, 0.0};
  const auto s = rank::context_scores(e, std::span<const double>(q));
  CHECK(s[0] == doctest::Approx(sigmoid(1.0)));
  CHECK(s[1] == doctest::Approx(sigmoid(-1.0)));
}

TEST_CASE("coarse rank sorts by score and breaks ties by start, scale, index") {
  const anchors::AnchorGrid g(40, 1.0, 10, {1, 2});  // 4 + 2 anchors
  const std::vector<double> s{0.1, 0.9, 0.5, 0.9, 0.9, 0.2};
  const auto order = rank::coarse_rank(s, g);
  // 0.9 at anchors 1 (start 10), 3 (start 30) and 4 (scale 1, start 0).
  CHECK(order == std::vector<std::size_t>{4, 1, 3, 2, 5, 0});
}

TEST_CASE("select_topm takes the m best of each scale") {
  const anchors::AnchorGrid g(40, 1.0, 10, {1, 2});
  const std::vector<double> s{0.1, 0.9, 0.5, 0.7, 0.3, 0.2};
  CHECK(rank::select_topm(s, g, 2) == std::vector<std::size_t>{1, 3, 4, 5});
  CHECK(rank::select_topm(s, g, 3) == std::vector<std::size_t>{1, 3, 2, 4, 5});
  CHECK(rank::select_topm(s, g, 10).size() == 6);
}

TEST_CASE("rank_subset orders positions within the subset") {
  const anchors::AnchorGrid g(40, 1.0, 10, {1, 2});
  const std::vector<std::size_t> subset{0, 2, 5};
  const std::vector<double> s{0.3, 0.8, 0.3};
  CHECK(rank::rank_subset(s, subset, g) == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("content scores average frame cosines per segment") {
  std::mt19937_64 rng(23);
  const auto frames = oracle::random_matrix(7, 4, rng);
  const auto q = oracle::random_matrix(1, 4, rng);
  const num::SegmentOffsets seg{0, 3, 7};
  const auto s = rank::content_scores(frames, seg, q.row(0));
  REQUIRE(s.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    double m = 0.0;
    for (std::size_t r = seg[k]; r < seg[k + 1]; ++r) m += cosine(frames.row(r), q.row(0));
    m /= double(seg[k + 1] - seg[k]);
    CHECK(s[k] == doctest::Approx(sigmoid(m)).epsilon(1e-7));
  }
}

TEST_CASE("rerank adds context and content scores") {
  const std::vector<double> a{0.1, 0.5}, b{0.2, 0.3};
  const auto r = rank::rerank(a, b);
  CHECK(r[0] == doctest::Approx(0.3));
  CHECK(r[1] == doctest::Approx(0.8));
  const std::vector<double> c{0.1};
  CHECK_THROWS(rank::rerank(a, c));
}
