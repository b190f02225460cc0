#pragma once

// Encoder and the stack of learnable centroid-updating blocks.
//
// Each block softly assigns embeddings to the current centroids through the
// score  l(z, c) = -act((W_Q p) . (W_K p)) / tau,  p = z - c,  and then moves
// every centroid to the responsibility-weighted mean of the embeddings. The
// centroids are re-derived from a fixed orthonormal initialisation on every
// forward pass, which is what lets a trained model adapt to a shifted domain
// without retraining.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tdcm/autodiff.hpp"
#include "tdcm/core_math.hpp"

namespace tdcm {

struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

inline constexpr double kStandardizeEps = 1e-5;

struct EncoderParams {
  std::vector<DenseLayer> layers;
  ActivationKind hidden_activation = ActivationKind::relu();
  // Standardise each embedding column over the batch after the last layer.
  bool standardize_output = false;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate() const;

  // Fully connected net d -> hidden -> ... -> b with `num_layers` layers and
  // He-uniform weights; biases start at zero.
  static EncoderParams mlp(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                           std::size_t num_layers, std::uint64_t seed);
};

Matrix encode(const EncoderParams& params, const Matrix& x);

enum class ScoreMode {
  Symmetric,  // W = (raw + raw^T) / 2
  Raw,        // raw matrices used directly (ablation without the symmetry constraint)
  PsdTied,    // W_Q = W_K = A A^T + eps I with A = wq_raw
};

std::string score_mode_name(ScoreMode mode);

struct ScoreParams {
  Matrix wq_raw;
  Matrix wk_raw;
  ActivationKind activation = ActivationKind::relu();
  double tau = 1.0;
  ScoreMode mode = ScoreMode::Symmetric;
  double psd_epsilon = 1e-6;

  std::size_t dim() const noexcept { return wq_raw.rows(); }
  Matrix effective_wq() const;
  Matrix effective_wk() const;
  void validate() const;

  static ScoreParams identity(std::size_t b, ActivationKind activation = ActivationKind::relu(),
                              double tau = 1.0);
};

double score(std::span<const double> z, std::span<const double> c, const ScoreParams& sp);

// N x K matrix of score(z_i, c_j).
Matrix score_matrix(const Matrix& z, const Matrix& centroids, const ScoreParams& sp);

struct CentroidState {
  Matrix centroids;  // K x b
  std::size_t block_index = 0;
};

struct AssignmentMatrix {
  Matrix delta;  // N x K, rows on the probability simplex
};

enum class CentroidInit { Identity, RandomOrthonormal };

struct BlockStackConfig {
  std::size_t num_blocks = 4;
  std::size_t embed_dim = 0;
  std::size_t clusters = 0;
  CentroidInit init = CentroidInit::Identity;
  bool global_normalization = false;

  void validate() const;
};

struct StackTrace {
  std::vector<CentroidState> states;           // blocks 0..L
  std::vector<AssignmentMatrix> assignments;   // delta^(1)..delta^(L)

  const AssignmentMatrix& final_assignment() const;
  // Per-row argmax of delta^(L); ties go to the lowest cluster index.
  std::vector<int> labels() const;
};

AssignmentMatrix assign(const Matrix& z, const CentroidState& state, const ScoreParams& sp);
CentroidState update_centroids(const Matrix& z, const AssignmentMatrix& delta,
                               const CentroidState& previous, bool global_normalization = false);
CentroidState init_centroids(const BlockStackConfig& cfg, std::uint64_t seed);
StackTrace run_stack(const Matrix& z, const BlockStackConfig& cfg, const ScoreParams& sp,
                     std::uint64_t seed);

// Everything trained by gradient descent. The flattened order is
// [W_1, b_1, ..., W_n, b_n, wq_raw, wk_raw].
struct ModelParams {
  EncoderParams encoder;
  ScoreParams score;

  std::vector<Matrix> flatten() const;
  void assign_flat(std::span<const Matrix> flat);
  std::size_t flat_count() const noexcept { return 2 * encoder.layers.size() + 2; }
};

// Taped counterparts; values agree bit for bit with the untaped functions.
namespace taped {

struct StackNodes {
  ad::Var embeddings;
  ad::Var wq;
  ad::Var wk;
  std::vector<ad::Var> centroids;    // L + 1 nodes
  std::vector<ad::Var> assignments;  // L nodes
  std::vector<ad::Var> scores;       // L nodes, scores[l-1] = score(z, c^(l-1))
};

ad::Var encode(ad::Tape& tape, std::span<const ad::Var> layer_params, ad::Var x,
               const ActivationKind& hidden_activation, bool standardize_output = false);

std::pair<ad::Var, ad::Var> effective_weights(ad::Tape& tape, ad::Var wq_raw, ad::Var wk_raw,
                                              const ScoreParams& settings);

StackNodes run_stack(ad::Tape& tape, ad::Var embeddings, ad::Var wq, ad::Var wk,
                     const Matrix& initial_centroids, const BlockStackConfig& cfg,
                     const ScoreParams& settings);

// Encoder plus stack from flattened ModelParams variables.
StackNodes forward(ad::Tape& tape, std::span<const ad::Var> flat_params, const Matrix& x,
                   const Matrix& initial_centroids, const BlockStackConfig& cfg,
                   const ScoreParams& settings, const ActivationKind& hidden_activation,
                   bool standardize_output = false);

}  // namespace taped

}  // namespace tdcm
