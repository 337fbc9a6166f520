#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "soonet/errors.hpp"
#include "soonet/eval/eval.hpp"
#include "json.hpp"

using namespace soonet;

namespace {

std::vector<Prediction> random_predictions(std::mt19937_64& rng, std::size_t count, bool ties) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::uniform_int_distribution<int> coarse(0, 4);
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double a = u(rng), len = 1.0 + u(rng) / 5.0;
    const double score = ties ? coarse(rng) / 4.0 : u(rng) / 100.0;
    out.push_back({Interval{a, a + len}, score, i});
  }
  return out;
}

}  // namespace

TEST_CASE("recall examples") {
  const std::vector<Interval> gts{{0.0, 10.0}, {20.0, 30.0}};
  const std::vector<std::vector<Prediction>> preds{
      {{{0.0, 10.0}, 0.9, 0}, {{50.0, 60.0}, 0.1, 1}},
      {{{50.0, 60.0}, 0.8, 0}, {{22.0, 30.0}, 0.7, 1}},
  };
  const auto r = eval::recall_at(preds, gts, {1, 5}, {0.5, 0.8});
  CHECK(r.at(1, 0.5) == 0.5);
  CHECK(r.at(5, 0.5) == 1.0);
  CHECK(r.at(5, 0.8) == 0.5);  // IoU of exactly 0.8 is not above 0.8
  CHECK(r.queries == 2);
  CHECK(r.best_iou[1] == doctest::Approx(0.8));
  CHECK_THROWS(r.at(2, 0.5));
}

TEST_CASE("recall uses a strict threshold and counts empty lists as misses") {
  const std::vector<Interval> gts{{0.0, 10.0}, {0.0, 10.0}};
  const std::vector<std::vector<Prediction>> preds{{{{0.0, 5.0}, 1.0, 0}}, {}};
  const auto r = eval::recall_at(preds, gts, {1}, {0.5, 0.49});
  CHECK(r.at(1, 0.5) == 0.0);
  CHECK(r.at(1, 0.49) == 0.5);
}

TEST_CASE("recall report keys") {
  const std::vector<Interval> gts{{0.0, 10.0}};
  const std::vector<std::vector<Prediction>> preds{{{{0.0, 10.0}, 1.0, 0}}};
  const auto r = eval::recall_at(preds, gts, {1, 5}, {0.1, 0.5});
  const auto j = nlohmann::json::parse(r.report());
  CHECK(j["R@1-0.1"] == 1.0);
  CHECK(j["R@5-0.5"] == 1.0);
  CHECK(j["queries"] == 1);
  CHECK(eval::recall_key(5, 0.3) == "R@5-0.3");
}

TEST_CASE("recall rejects mismatched inputs") {
  const std::vector<Interval> gts{{0.0, 10.0}};
  const std::vector<std::vector<Prediction>> preds(2);
  CHECK_THROWS_AS(eval::recall_at(preds, gts, {1}, {0.5}), UsageError);
}

TEST_CASE("recall matches brute force on random instances") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t q = 1 + t % 7;
    std::vector<Interval> gts;
    std::vector<std::vector<Prediction>> preds;
    for (std::size_t i = 0; i < q; ++i) {
      const double a = u(rng);
      gts.push_back({a, a + 1.0 + u(rng) / 4.0});
      preds.push_back(random_predictions(rng, t % 9, false));
    }
    const std::vector<std::size_t> ns{1, 3, 5};
    const std::vector<double> ms{0.1, 0.3, 0.5, 0.7};
    const auto r = eval::recall_at(preds, gts, ns, ms);
    for (auto n : ns) {
      for (auto m : ms) CHECK(r.at(n, m) == oracle::brute_recall(preds, gts, n, m));
    }
  }
}

TEST_CASE("NMS matches brute force on random instances") {
  std::mt19937_64 rng(53);
  for (int t = 0; t < 300; ++t) {
    const auto p = random_predictions(rng, 1 + t % 40, t % 2 == 0);
    for (double thr : {0.0, 0.3, 0.5, 1.0}) {
      CHECK(eval::nms_1d(p, thr) == oracle::brute_nms(p, thr));
    }
  }
}

TEST_CASE("NMS with a limit returns the prefix of the full result") {
  std::mt19937_64 rng(55);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_predictions(rng, 30, t % 2 == 0);
    const auto full = eval::nms_1d(p, 0.4);
    for (std::size_t limit : {1u, 3u, 7u, 100u}) {
      const auto part = eval::nms_1d(p, 0.4, limit);
      REQUIRE(part.size() == std::min(limit, full.size()));
      for (std::size_t i = 0; i < part.size(); ++i) CHECK(part[i] == full[i]);
    }
  }
}

TEST_CASE("NMS output is score ordered and pairwise below the threshold") {
  std::mt19937_64 rng(57);
  const auto kept = eval::nms_1d(random_predictions(rng, 200, false), 0.5);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i) CHECK(kept[i - 1].score >= kept[i].score);
    for (std::size_t j = i + 1; j < kept.size(); ++j) CHECK(oracle::iou(kept[i].span, kept[j].span) <= 0.5);
  }
  CHECK_THROWS_AS(eval::nms_1d({}, 1.5), ParameterError);
  CHECK(eval::nms_1d({}, 0.5).empty());
}
