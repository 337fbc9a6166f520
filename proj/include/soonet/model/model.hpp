#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "soonet/anchors/anchors.hpp"
#include "soonet/data/sampler.hpp"
#include "soonet/encoder/encoder.hpp"
#include "soonet/eval/eval.hpp"
#include "soonet/losses/losses.hpp"
#include "soonet/numerics/adamw.hpp"
#include "soonet/numerics/param_store.hpp"
#include "soonet/prediction.hpp"

namespace soonet::model {

using num::Var;

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t base_len = 10;
  std::vector<std::size_t> pool_factors{1, 2, 2, 2};
  enc::EncoderConfig encoder;
  std::size_t m = 8;
  std::size_t n = 5;
  double alpha_ctx = 0.01;
  double alpha_ctn = 0.01;
  double lambda1 = 1.0;
  double lambda2 = 20.0;
  loss::RankLossOptions loss;
  // Module toggles. Pre-ranking is always on; re-ranking and boundary
  // regression can be switched off for ablations.
  bool use_rr = true;
  bool use_br = true;
  bool per_scale_regressor = false;
  /// Stops the regression loss from updating the context encoder.
  bool detach_regression_context = true;
  bool nms = false;
  double nms_threshold = 0.5;

  std::size_t scales() const { return pool_factors.size(); }
  /// Longest anchor, which sizes the positional table.
  std::size_t max_anchor_len() const;
  void validate() const;
};

num::ParamStore<double> init_params(const ModelConfig& config, std::uint64_t seed);

/// True for regressor weights (frozen by `freeze_regressor`).
bool is_regressor_param(const std::string& name);

template <typename T>
struct Weights {
  Var<T> conv_w, conv_b;
  std::vector<enc::SwinBlockWeights<T>> blocks;
  enc::IntraAnchorWeights<T> intra;
  Var<T> att_w;
  std::vector<enc::MlpWeights<T>> regressors;  // one shared, or one per scale

  const enc::MlpWeights<T>& regressor(std::size_t scale) const {
    return regressors.size() == 1 ? regressors[0] : regressors.at(scale);
  }
};

template <typename T>
Weights<T> bind_weights(const num::BoundParams<T>& params, const ModelConfig& config);

/// Multi-scale context features of every anchor, stacked scale-major (A × D).
template <typename T>
Var<T> encode_anchors(Var<T> video, const Weights<T>& w, const ModelConfig& config);

struct LossParts {
  double ctx = 0.0;
  double ctn = 0.0;
  double align = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

template <typename T>
struct TrainingForward {
  Var<T> total;
  LossParts parts;
};

/// Records the full objective for one video and its batch of queries.
template <typename T>
TrainingForward<T> training_forward(num::Tape<T>& tape, const num::BoundParams<T>& params,
                                    const ModelConfig& config, const data::Batch& batch);

/// Query-independent half of inference: the anchor grid and its encoded
/// features for one video.
template <typename T>
struct EncodedVideo {
  anchors::AnchorGrid grid;
  num::Tensor<T> video;            // N × D raw frames
  num::Tensor<T> anchor_features;  // A × D
};

template <typename T>
EncodedVideo<T> encode_video(const num::ParamStore<T>& params, const ModelConfig& config,
                             num::Tensor<T> video, double fps);

/// Same, with a grid built by the caller for `video`.
template <typename T>
EncodedVideo<T> encode_video(const num::ParamStore<T>& params, const ModelConfig& config,
                             anchors::AnchorGrid grid, num::Tensor<T> video);

/// Every candidate for one query in final rank order, before truncation:
/// all anchors by context score when re-ranking and regression are off,
/// otherwise the per-scale top-m subset with re-ranked scores and adjusted
/// bounds as the toggles request.
template <typename T>
std::vector<Prediction> score_query(const EncodedVideo<T>& video, const num::ParamStore<T>& params,
                                    const ModelConfig& config, std::span<const T> query);

/// encode_video + score_query + top_n.
template <typename T>
std::vector<Prediction> predict(const num::ParamStore<T>& params, const ModelConfig& config,
                                const data::VideoFeatures& video, std::span<const double> query);

struct EvalOptions {
  std::vector<std::size_t> ns{1, 5};
  std::vector<double> ms{0.1, 0.3, 0.5};
  bool use_f32 = false;
  /// Queries are scored in parallel when > 1; results do not depend on it.
  int threads = 1;
};

/// Encodes each video once, ranks every annotated query and reports recall.
/// Queries are visited video by video in dataset order.
eval::EvalResult evaluate(const num::ParamStore<double>& params, const ModelConfig& config,
                          const data::Dataset& dataset, const EvalOptions& options = {});

// Checkpoints: magic "SOOM", u32 version, u8 dtype, the run configuration as
// text, then named parameter blocks (name, rank, extents, payload). Optimizer
// moments follow so a resumed run continues exactly.
struct Checkpoint {
  std::string config_text;
  num::ParamStore<double> params;
  std::uint64_t steps = 0;
  num::ParamStore<double> first_moments;
  num::ParamStore<double> second_moments;
};

inline constexpr char kCheckpointMagic[4] = {'S', 'O', 'O', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_queries = 32;
  std::uint64_t seed = 0;
  bool freeze_regressor = false;
  bool use_f32 = false;
  num::AdamWConfig optimizer;
};

struct LogEntry {
  std::uint64_t step = 0;
  LossParts parts;
};

/// Sample → forward → backward → AdamW. Parameters are kept in 64-bit; a
/// 32-bit run casts them per step.
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, num::ParamStore<double> params);

  /// Continues from a checkpoint's weights and optimizer state.
  void restore(const Checkpoint& checkpoint);

  LogEntry step(const data::Dataset& dataset);
  std::uint64_t steps_done() const { return optimizer_.steps(); }
  const num::ParamStore<double>& params() const { return params_; }
  Checkpoint checkpoint(std::string config_text) const;

  /// Loss of one batch without updating anything.
  LossParts evaluate(const data::Batch& batch) const;

 private:
  ModelConfig model_;
  TrainConfig train_;
  num::ParamStore<double> params_;
  num::AdamW<double> optimizer_;
  std::vector<bool> frozen_;
};

/// Seed of the batch drawn at a given step.
std::uint64_t batch_seed(std::uint64_t seed, std::uint64_t step);

}  // namespace soonet::model
