#pragma once

// Attention encoder-decoder sequencing policy and its REINFORCE trainer with a
// greedy rollout baseline.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnroute/pin_decompose.hpp"
#include "attnroute/rng.hpp"
#include "attnroute/tensor.hpp"

namespace attnroute {

inline constexpr int kFeatureCount = 7;
inline constexpr double kLogitClip = 10.0;
inline constexpr double kMaskedLogit = -1e9;

struct ModelDims {
  int d = 64;
  int heads = 8;
  int layers = 2;
  int d_ff = 256;

  void validate() const;
};

struct EncoderLayer {
  dc::Tensor wq, wk, wv, wo;  // d x d
  dc::Tensor bn1_gamma, bn1_beta;
  dc::Tensor ff_w1, ff_b1;  // d x d_ff, 1 x d_ff
  dc::Tensor ff_w2, ff_b2;  // d_ff x d, 1 x d
  dc::Tensor bn2_gamma, bn2_beta;
};

struct PolicyParams {
  ModelDims dims;
  dc::Tensor w_in, b_in;  // 7 x d, 1 x d
  std::vector<EncoderLayer> layers;
  dc::Tensor w_ctx;                               // 3d x d
  dc::Tensor first_placeholder, last_placeholder;  // 1 x d
  dc::Tensor w_gk, w_gv, w_go;                    // glimpse projections, d x d
  dc::Tensor w_lk;                                // logit keys, d x d

  // Every weight uniform in [-1/sqrt(d), 1/sqrt(d)]; batch-norm scale 1, shift 0.
  static PolicyParams init(const ModelDims& dims, std::uint64_t seed);

  // Stable names, used for checkpoints.
  dc::NamedTensors named() const;
  std::vector<dc::Tensor> tensors() const;
  // Deep copy sharing no buffers.
  PolicyParams clone() const;
  // Overwrites values from named tensors with matching names and shapes.
  void assign(const dc::NamedTensors& values);
};

// Node matrix (n_max x 7) and real-slot mask for one instance. Coordinates are
// divided by the grid width/height and the net feature by 1 + max net index.
struct Features {
  dc::Tensor nodes;
  std::vector<char> mask;  // 1 for real slots
};

Features featurize(const RoutingInstance& inst);

// Multi-head self-attention; keys with key_mask == 0 are excluded. When
// `weights` is given it receives one n x n attention matrix per head.
dc::Tensor multi_head_attention(const dc::Tensor& h, const dc::Tensor& wq, const dc::Tensor& wk, const dc::Tensor& wv,
                                const dc::Tensor& wo, int heads, std::span<const char> key_mask,
                                std::vector<dc::Tensor>* weights = nullptr);

// Input projection followed by the attention layers. Batch-norm statistics
// are taken over the instance's real slots, so the result depends only on
// the parameters and the features.
dc::Tensor encode(const PolicyParams& params, const dc::Tensor& nodes, std::span<const char> mask);

// Per-instance decoder state computed once from the node embeddings.
struct DecoderCache {
  dc::Tensor embeddings;  // n x d
  dc::Tensor graph_mean;  // 1 x d, over real slots
  std::vector<dc::Tensor> glimpse_keys_t;  // per head: (d/H) x n
  std::vector<dc::Tensor> glimpse_values;  // per head: n x (d/H)
  dc::Tensor logit_keys_t;                 // d x n
  std::vector<char> mask;
};

DecoderCache prepare_decoder(const PolicyParams& params, const dc::Tensor& embeddings, std::span<const char> mask);

// Log-probabilities (1 x n) of choosing each slot next. `visited` marks slots
// already chosen; `first`/`last` are the first and last chosen slots, or -1.
// Visited and pad slots get probability exactly 0.
dc::Tensor decode_step(const PolicyParams& params, const DecoderCache& cache, std::span<const char> visited, int first,
                       int last);

struct Rollout {
  std::vector<int> order;
  double log_prob = 0.0;
  int cost = 0;
  std::vector<std::vector<double>> step_probs;  // filled when requested
};

class NoSelectableNode : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Picks the next slot given the step's probabilities.
using StepChooser = std::function<int(std::span<const double> probs, std::span<const char> selectable)>;

struct Episode {
  Rollout rollout;
  dc::Tensor log_prob;  // scalar; differentiable when parameters require grad
};

// Runs the decoder until every real slot is chosen. Does not route.
Episode run_episode(const PolicyParams& params, const Features& f, const StepChooser& choose,
                    bool record_probs = false);

// Log-probability of a given order of the real slots.
dc::Tensor sequence_log_prob(const PolicyParams& params, const Features& f, std::span<const int> order);

Rollout sample_rollout(const RoutingInstance& inst, const PolicyParams& params, Rng& rng, bool record_probs = false);
Rollout greedy_rollout(const RoutingInstance& inst, const PolicyParams& params, bool record_probs = false);

// One-sided paired t-test of H1: mean(a - b) < 0. Returns the p-value.
double paired_ttest(std::span<const double> a, std::span<const double> b);
double pearson(std::span<const double> a, std::span<const double> b);

struct TrainHyper {
  int epochs = 100;
  int batches = 20;
  int batch_size = 5;
  double lr = 1e-4;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  ModelDims dims;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_mean_cost = 0.0;
  double val_mean_cost = 0.0;
  bool baseline_refreshed = false;
};

struct TrainResult {
  PolicyParams best;  // lowest validation cost
  PolicyParams last;  // after the final epoch
  int best_epoch = 0;
  double best_val_cost = 0.0;
  std::vector<EpochRecord> curve;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// REINFORCE with a greedy rollout baseline; returns the parameters with the
// lowest validation greedy cost. `on_epoch` is called after every epoch.
TrainResult reinforce_train(const std::vector<RoutingInstance>& train, const std::vector<RoutingInstance>& val,
                            const TrainHyper& hyper, const std::function<void(const EpochRecord&)>& on_epoch = {});

// Mean greedy cost over a set of instances.
double mean_greedy_cost(const std::vector<RoutingInstance>& set, const PolicyParams& params);

struct PolicyCheckpoint {
  PolicyParams params;
  int n_max = 0;
  std::map<std::string, std::string> meta;
};

void save_policy(const std::string& path, const PolicyParams& params, int n_max,
                 std::map<std::string, std::string> meta = {});
PolicyCheckpoint load_policy(const std::string& path);

}  // namespace attnroute
