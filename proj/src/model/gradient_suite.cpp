#include "soonet/model/gradient_suite.hpp"

#include <functional>
#include <memory>
#include <random>

#include "json.hpp"
#include "soonet/anchors/anchors.hpp"
#include "soonet/data/sampler.hpp"
#include "soonet/data/synthetic.hpp"
#include "soonet/encoder/encoder.hpp"
#include "soonet/errors.hpp"
#include "soonet/losses/losses.hpp"
#include "soonet/model/model.hpp"
#include "soonet/regression/regression.hpp"

namespace soonet::model {
namespace {

using num::BoundParams;
using num::ParamStore;
using num::Tape;
using num::Tensor;
using Rng = std::mt19937_64;

constexpr std::size_t kDim = 8;
constexpr double kEps = 1e-8;

Tensor<double> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  auto t = Tensor<double>::matrix(rows, cols);
  for (double& x : t.mutable_data()) x = n(rng);
  return t;
}

Tensor<double> random_labels(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto t = Tensor<double>::matrix(rows, cols);
  for (double& x : t.mutable_data()) x = u(rng) < 0.4 ? u(rng) : 0.0;
  // One positive per row keeps every row and column term alive.
  for (std::size_t r = 0; r < rows; ++r) t.at(r, r % cols) = 0.5 + 0.5 * u(rng);
  return t;
}

// Scalar probe of a layer output: Σ out ⊙ R for a fixed random R.
Var<double> project(Tape<double>& tape, Var<double> out, const Tensor<double>& r) {
  return num::sum(num::mul(out, tape.constant(r)));
}

enc::EncoderConfig small_encoder() {
  enc::EncoderConfig c;
  c.window = 4;
  c.shift = 2;
  c.heads = 2;
  return c;
}

struct Case {
  ParamStore<double> params;
  num::LossBuilder loss;
  num::GradCheckOptions options;
};

using Factory = std::function<Case(Rng&)>;

// Scores in (0, 1) from a free parameter, as the model produces them.
Var<double> scores_of(const BoundParams<double>& p) { return num::sigmoid(p["s"]); }

const std::vector<std::pair<std::string, Factory>>& factories() {
  static const std::vector<std::pair<std::string, Factory>> table = {
      {"partition_base",
       [](Rng& rng) {
         Case c;
         c.params.add("x", random_matrix(23, kDim, rng));
         c.params.add("w", random_matrix(4 * kDim, kDim, rng, 0.3));
         c.params.add("b", random_matrix(1, kDim, rng));
         const auto r = random_matrix(6, kDim, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           return project(t, anchors::partition_base(p["x"], 4, p["w"], num::reshape(p["b"], {kDim})), r);
         };
         return c;
       }},
      {"window_msa",
       [](Rng& rng) {
         Case c;
         c.params.add("x", random_matrix(11, kDim, rng));
         enc::add_msa_params(c.params, "msa", kDim, rng);
         const auto r = random_matrix(11, kDim, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           return project(t, enc::window_msa(p["x"], enc::bind_msa(p, "msa"), small_encoder(), 0, 11), r);
         };
         return c;
       }},
      {"shifted_window_msa",
       [](Rng& rng) {
         Case c;
         c.params.add("x", random_matrix(11, kDim, rng));
         enc::add_msa_params(c.params, "msa", kDim, rng);
         const auto r = random_matrix(11, kDim, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           return project(t, enc::window_msa(p["x"], enc::bind_msa(p, "msa"), small_encoder(), 2, 9), r);
         };
         return c;
       }},
      {"swin_block",
       [](Rng& rng) {
         Case c;
         c.params.add("x", random_matrix(10, kDim, rng));
         enc::add_swin_params(c.params, "blk", kDim, 2 * kDim, rng);
         const auto r = random_matrix(10, kDim, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           return project(t, enc::swin_block(p["x"], enc::bind_swin(p, "blk"), small_encoder(), 10), r);
         };
         return c;
       }},
      {"encode_multiscale",
       [](Rng& rng) {
         Case c;
         c.params.add("x", random_matrix(12, kDim, rng));
         for (int l = 0; l < 3; ++l) enc::add_swin_params(c.params, "blk" + std::to_string(l), kDim, 2 * kDim, rng);
         const auto r0 = random_matrix(12, kDim, rng), r1 = random_matrix(6, kDim, rng),
                    r2 = random_matrix(3, kDim, rng);
         c.loss = [r0, r1, r2](Tape<double>& t, const BoundParams<double>& p) {
           std::vector<enc::SwinBlockWeights<double>> blocks;
           for (int l = 0; l < 3; ++l) blocks.push_back(enc::bind_swin(p, "blk" + std::to_string(l)));
           auto ms = enc::encode_multiscale(p["x"], 12, blocks, {1, 2, 2}, small_encoder());
           return num::add(num::add(project(t, ms.features[0], r0), project(t, ms.features[1], r1)),
                           project(t, ms.features[2], r2));
         };
         return c;
       }},
      {"context_scores",
       [](Rng& rng) {
         Case c;
         c.params.add("e", random_matrix(9, kDim, rng));
         c.params.add("q", random_matrix(3, kDim, rng));
         const auto r = random_matrix(3, 9, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           auto s = num::sigmoid(num::matmul_nt(num::row_normalize(p["q"], kEps), num::row_normalize(p["e"], kEps)));
           return project(t, s, r);
         };
         return c;
       }},
      {"intra_anchor_msa",
       [](Rng& rng) {
         Case c;
         c.params.add("v", random_matrix(20, kDim, rng));
         enc::add_intra_params(c.params, "intra", kDim, 6, rng);
         const auto r = random_matrix(11, kDim, rng);  // 3 + 6 + the short final anchor's 2
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           static const anchors::AnchorGrid grid(20, 1.0, 3, std::vector<std::size_t>{1, 2});
           const std::vector<const anchors::Anchor*> chosen{&grid.at(0, 2), &grid.at(1, 0), &grid.at(0, 6)};
           auto out = enc::intra_anchor_msa(p["v"], chosen, enc::bind_intra(p, "intra"), small_encoder());
           return project(t, out.frames, r);
         };
         return c;
       }},
      {"content_scores",
       [](Rng& rng) {
         Case c;
         c.params.add("v", random_matrix(10, kDim, rng));
         c.params.add("q", random_matrix(2, kDim, rng));
         const auto r = random_matrix(2, 3, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           const num::SegmentOffsets seg{0, 3, 7, 10};
           auto cos = num::matmul_nt(num::row_normalize(p["v"], kEps), num::row_normalize(p["q"], kEps));
           return project(t, num::sigmoid(num::transpose(num::segment_mean_rows(cos, seg))), r);
         };
         return c;
       }},
      {"attentive_pool",
       [](Rng& rng) {
         Case c;
         c.params.add("v", random_matrix(10, kDim, rng));
         c.params.add("w", random_matrix(1, kDim, rng));
         const auto r = random_matrix(3, kDim, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           return project(t, reg::attentive_pool(p["v"], p["w"], num::SegmentOffsets{0, 4, 5, 10}), r);
         };
         return c;
       }},
      {"predict_bias",
       [](Rng& rng) {
         Case c;
         c.params.add("e", random_matrix(4, kDim, rng));
         c.params.add("pooled", random_matrix(4, kDim, rng));
         c.params.add("q", random_matrix(4, kDim, rng));
         enc::add_mlp_params(c.params, "mlp", 2 * kDim, 2 * kDim, 2, rng);
         const auto r = random_matrix(4, 2, rng);
         c.loss = [r](Tape<double>& t, const BoundParams<double>& p) {
           return project(t, reg::predict_bias(p["e"], p["pooled"], p["q"], enc::bind_mlp(p, "mlp")), r);
         };
         return c;
       }},
      {"rank_loss_rows",
       [](Rng& rng) {
         Case c;
         c.params.add("s", random_matrix(3, 7, rng));
         const auto y = random_labels(3, 7, rng);
         c.loss = [y](Tape<double>&, const BoundParams<double>& p) {
           return loss::rank_loss_rows(scores_of(p), y, {}, 5.0);
         };
         return c;
       }},
      {"rank_loss_cols",
       [](Rng& rng) {
         Case c;
         c.params.add("s", random_matrix(4, 5, rng));
         const auto y = random_labels(4, 5, rng);
         c.loss = [y](Tape<double>&, const BoundParams<double>& p) {
           return loss::rank_loss_cols(scores_of(p), y, {}, 5.0);
         };
         return c;
       }},
      {"dual_rank_loss",
       [](Rng& rng) {
         Case c;
         c.params.add("s", random_matrix(4, 6, rng));
         const auto y = random_labels(4, 6, rng);
         loss::Mask mask(24, 1);
         mask[5] = mask[13] = 0;
         c.loss = [y, mask](Tape<double>&, const BoundParams<double>& p) {
           return loss::dual_rank_loss(scores_of(p), y, mask, 0.01);
         };
         return c;
       }},
      {"bce_loss",
       [](Rng& rng) {
         Case c;
         c.params.add("s", random_matrix(3, 5, rng));
         const auto y = random_labels(3, 5, rng);
         c.loss = [y](Tape<double>&, const BoundParams<double>& p) { return loss::bce_loss(scores_of(p), y, {}); };
         return c;
       }},
      {"nce_loss",
       [](Rng& rng) {
         Case c;
         c.params.add("s", random_matrix(3, 5, rng));
         const auto y = random_labels(3, 5, rng);
         c.loss = [y](Tape<double>&, const BoundParams<double>& p) {
           return loss::nce_loss(scores_of(p), y, {}, 0.1);
         };
         return c;
       }},
      {"iou_loss",
       [](Rng& rng) {
         Case c;
         c.params.add("d", random_matrix(4, 2, rng, 0.1));
         c.loss = [](Tape<double>&, const BoundParams<double>& p) {
           const std::vector<Interval> anchors{{0, 10}, {4, 8}, {20, 30}, {12, 18}};
           const std::vector<Interval> gts{{5, 15}, {3, 9}, {22, 26}, {10, 16}};
           return loss::iou_loss(p["d"], anchors, gts);
         };
         return c;
       }},
      {"total_loss",
       [](Rng& rng) {
         Case c;
         c.params.add("a", random_matrix(1, 1, rng));
         c.params.add("r", random_matrix(1, 1, rng));
         c.loss = [](Tape<double>&, const BoundParams<double>& p) {
           return loss::total_loss(num::sum(p["a"]), num::sum(p["r"]), 1.0, 20.0);
         };
         return c;
       }},
      {"training_forward",
       [](Rng& rng) {
         data::SyntheticConfig sc;
         sc.seed = rng();
         sc.n_videos = 1;
         sc.frames_per_video = 46;
         sc.dim = kDim;
         sc.queries_per_video = 3;
         sc.fps = 2.0;
         sc.span_min_s = 3.0;
         sc.span_max_s = 8.0;
         auto dataset = std::make_shared<data::Dataset>(data::generate_synthetic(sc));
         ModelConfig mc;
         mc.dim = kDim;
         mc.base_len = 3;
         mc.pool_factors = {1, 2, 2};
         mc.encoder = small_encoder();
         mc.m = 2;
         mc.alpha_ctx = mc.alpha_ctn = 5.0;
         // Finite differences see the regression path into the context
         // features, so the full gradient is checked here.
         mc.detach_regression_context = false;
         Case c;
         c.params = init_params(mc, rng());
         c.options.max_coords_per_tensor = 6;
         c.options.seed = rng();
         c.loss = [dataset, mc](Tape<double>& t, const BoundParams<double>& p) {
           data::Batch batch;
           batch.video = &dataset->videos.front();
           batch.queries = dataset->queries_of(batch.video->video_id);
           return training_forward(t, p, mc, batch).total;
         };
         return c;
       }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& gradient_case_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : factories()) out.push_back(name);
    return out;
  }();
  return names;
}

GradientCase run_gradient_case(const std::string& name, std::uint64_t seed, double tolerance) {
  for (const auto& [n, factory] : factories()) {
    if (n != name) continue;
    Rng rng(seed);
    Case c = factory(rng);
    c.options.tolerance = tolerance;
    return GradientCase{name, seed, num::grad_check(c.loss, c.params, c.options)};
  }
  throw UsageError("unknown gradient case '" + name + "'");
}

GradientSuiteReport run_gradient_suite(std::size_t seeds, double tolerance, std::uint64_t base_seed) {
  if (seeds == 0) throw ParameterError("gradient suite needs at least one seed");
  GradientSuiteReport out;
  out.tolerance = tolerance;
  out.passed = true;
  for (const auto& name : gradient_case_names()) {
    for (std::size_t s = 0; s < seeds; ++s) {
      out.cases.push_back(run_gradient_case(name, base_seed + s, tolerance));
      out.passed = out.passed && out.cases.back().report.passed;
    }
  }
  return out;
}

std::string GradientSuiteReport::json() const {
  nlohmann::ordered_json j;
  j["tolerance"] = tolerance;
  j["passed"] = passed;
  auto& cs = j["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : cases) {
    cs.push_back({{"name", c.name},
                  {"seed", c.seed},
                  {"max_rel_error", c.report.max_rel_error},
                  {"passed", c.report.passed}});
  }
  return j.dump(2);
}

}  // namespace soonet::model
