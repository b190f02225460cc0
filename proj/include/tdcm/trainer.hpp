#pragma once

// Adam training on the source domain, checkpoint persistence and the
// source -> target transfer evaluation.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tdcm/config.hpp"
#include "tdcm/core_math.hpp"
#include "tdcm/datagen.hpp"
#include "tdcm/metrics.hpp"
#include "tdcm/model.hpp"
#include "tdcm/objectives.hpp"

namespace tdcm {

struct AdamOptions {
  double learning_rate = 5e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const std::vector<Matrix>& params);
};

// Decoupled weight decay: p <- p * (1 - lr * wd), then the bias-corrected
// Adam update.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state,
               const AdamOptions& options);

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 256;
  AdamOptions adam;
  std::uint64_t seed = 0;
  std::size_t eval_batch = 0;

  std::size_t input_dim = 0;
  std::size_t hidden_dim = 32;
  std::size_t encoder_layers = 3;
  ActivationKind hidden_activation = ActivationKind::relu();
  bool standardize_embeddings = true;

  BlockStackConfig stack;
  // Score settings (activation, tau, mode); raw matrices are initialised by train().
  ScoreParams score;
  LossWeights weights;

  bool variant_r = false;  // raw score matrices, no symmetry constraint
  bool variant_o = false;  // no orthogonality penalty
  bool variant_e = false;  // no entropy term

  void validate() const;
  ScoreParams effective_score_settings() const;
  LossWeights effective_weights() const;
};

TrainConfig make_train_config(const ExperimentConfig& cfg, std::size_t input_dim);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  ExperimentConfig config;
  std::size_t input_dim = 0;
  ModelParams params;
  AdamState adam;
  std::size_t epoch = 0;
  std::string rng_state;
  std::vector<LossBreakdown> loss_history;

  TrainConfig train_config() const { return make_train_config(config, input_dim); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

ModelParams init_model(const TrainConfig& tc);

// Runs the configured number of epochs. A non-finite loss raises
// NumericalError naming the epoch, batch and the last finite breakdown.
Checkpoint train(const Matrix& x, const ExperimentConfig& cfg);

// Forward pass with centroid adaptation; no parameters change.
StackTrace infer_trace(const Checkpoint& ckpt, const Matrix& x);
std::vector<int> infer_labels(const Checkpoint& ckpt, const Matrix& x);

struct RunRecord {
  std::string model;  // "tdcm" (with -R/-O/-E suffixes for ablations), "kmeans", "gmm" or "soft-kmeans"
  ExperimentConfig config;
  std::uint64_t pair_seed = 0;
  std::vector<LossBreakdown> loss_history;
  MetricsReport source;
  MetricsReport target;
  double wall_seconds = 0.0;

  MetricsReport diff() const {
    return {source.nmi - target.nmi, source.ari - target.ari, source.acc - target.acc};
  }
};

std::string run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const std::string& text);

// Evaluates on the full source and target sets.
RunRecord evaluate_transfer(const Checkpoint& ckpt, const Domain& source, const Domain& target);

}  // namespace tdcm
