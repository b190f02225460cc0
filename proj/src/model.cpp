#include "tdcm/model.hpp"

#include <cmath>
#include <random>

#include "tdcm/error.hpp"

namespace tdcm {

std::size_t EncoderParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.rows();
}

std::size_t EncoderParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.cols();
}

void EncoderParams::validate() const {
  if (layers.empty()) throw ConfigError("encoder has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& layer = layers[i];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw ShapeError("encoder layer " + std::to_string(i) + ": bias " + layer.bias.shape_string() +
                       " does not match weight " + layer.weight.shape_string());
    }
    if (i > 0 && layers[i - 1].weight.cols() != layer.weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(i) + " input dim " +
                       std::to_string(layer.weight.rows()) + " does not chain with previous output " +
                       std::to_string(layers[i - 1].weight.cols()));
    }
  }
}

EncoderParams EncoderParams::mlp(std::size_t input_dim, std::size_t hidden_dim,
                                 std::size_t output_dim, std::size_t num_layers,
                                 std::uint64_t seed) {
  if (num_layers == 0 || input_dim == 0 || output_dim == 0 || (num_layers > 1 && hidden_dim == 0)) {
    throw ConfigError("encoder dimensions and layer count must be positive");
  }
  std::mt19937_64 rng(seed);
  EncoderParams params;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    const std::size_t out = l + 1 == num_layers ? output_dim : hidden_dim;
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(in, out), Matrix(1, out)};
    for (double& w : layer.weight.values()) w = dist(rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Matrix encode(const EncoderParams& params, const Matrix& x) {
  params.validate();
  if (x.cols() != params.input_dim()) {
    throw ShapeError("encode: input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                     std::to_string(params.input_dim()));
  }
  Matrix h = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const DenseLayer& layer = params.layers[l];
    h = matmul(h, layer.weight);
    for (std::size_t i = 0; i < h.rows(); ++i) {
      auto row = h.row(i);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias(0, c);
    }
    if (l + 1 < params.layers.size()) {
      for (double& v : h.values()) v = apply_activation(params.hidden_activation, v);
    }
  }
  return params.standardize_output ? standardize_columns(h, kStandardizeEps) : h;
}

std::string score_mode_name(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::Symmetric: return "symmetric";
    case ScoreMode::Raw: return "raw";
    case ScoreMode::PsdTied: return "psd_tied";
  }
  return "symmetric";
}

namespace {

Matrix psd_form(const Matrix& a, double eps) {
  return add(matmul_bt(a, a), scaled(Matrix::identity(a.rows()), eps));
}

}  // namespace

Matrix ScoreParams::effective_wq() const {
  switch (mode) {
    case ScoreMode::Symmetric: return symmetrize(wq_raw);
    case ScoreMode::Raw: return wq_raw;
    case ScoreMode::PsdTied: return psd_form(wq_raw, psd_epsilon);
  }
  return wq_raw;
}

Matrix ScoreParams::effective_wk() const {
  switch (mode) {
    case ScoreMode::Symmetric: return symmetrize(wk_raw);
    case ScoreMode::Raw: return wk_raw;
    case ScoreMode::PsdTied: return psd_form(wq_raw, psd_epsilon);
  }
  return wk_raw;
}

void ScoreParams::validate() const {
  require_square(wq_raw, "ScoreParams.wq_raw");
  require_square(wk_raw, "ScoreParams.wk_raw");
  require_same_shape(wq_raw, wk_raw, "ScoreParams");
  if (!(tau > 0.0)) throw ParameterError("temperature tau must be positive");
  if (mode == ScoreMode::PsdTied && !(psd_epsilon > 0.0)) {
    throw ParameterError("psd_epsilon must be positive");
  }
}

ScoreParams ScoreParams::identity(std::size_t b, ActivationKind activation, double tau) {
  ScoreParams sp;
  sp.wq_raw = Matrix::identity(b);
  sp.wk_raw = Matrix::identity(b);
  sp.activation = activation;
  sp.tau = tau;
  return sp;
}

namespace {

// -act(q) elementwise; negation is written as a multiply by -1 to mirror the taped path.
Matrix negated_activation(const Matrix& q, const ActivationKind& kind) {
  Matrix a = q;
  for (double& v : a.values()) v = apply_activation(kind, v);
  return scaled(a, -1.0);
}

}  // namespace

Matrix score_matrix(const Matrix& z, const Matrix& centroids, const ScoreParams& sp) {
  sp.validate();
  const Matrix q = pairwise_bilinear_forms(z, centroids, sp.effective_wq(), sp.effective_wk());
  return scaled(negated_activation(q, sp.activation), 1.0 / sp.tau);
}

double score(std::span<const double> z, std::span<const double> c, const ScoreParams& sp) {
  if (z.size() != sp.dim() || c.size() != sp.dim()) {
    throw ShapeError("score: vector dimension does not match b=" + std::to_string(sp.dim()));
  }
  return score_matrix(Matrix::row_vector(z), Matrix::row_vector(c), sp)(0, 0);
}

void BlockStackConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("number of blocks L must be at least 1");
  if (clusters < 2) throw ConfigError("cluster count K must be at least 2");
  if (clusters > embed_dim) {
    throw ConfigError("orthogonal centroid initialisation needs K <= b (K=" +
                      std::to_string(clusters) + ", b=" + std::to_string(embed_dim) + ")");
  }
}

const AssignmentMatrix& StackTrace::final_assignment() const {
  if (assignments.empty()) throw StateError("stack trace holds no assignments");
  return assignments.back();
}

std::vector<int> StackTrace::labels() const { return argmax_rows(final_assignment().delta); }

AssignmentMatrix assign(const Matrix& z, const CentroidState& state, const ScoreParams& sp) {
  sp.validate();
  const Matrix q = pairwise_bilinear_forms(z, state.centroids, sp.effective_wq(), sp.effective_wk());
  return {softmax_rows(negated_activation(q, sp.activation), sp.tau)};
}

CentroidState update_centroids(const Matrix& z, const AssignmentMatrix& delta,
                               const CentroidState& previous, bool global_normalization) {
  return {weighted_centroids(z, delta.delta, previous.centroids, global_normalization),
          previous.block_index + 1};
}

CentroidState init_centroids(const BlockStackConfig& cfg, std::uint64_t seed) {
  if (cfg.clusters > cfg.embed_dim) {
    throw ConfigError("cannot initialise K=" + std::to_string(cfg.clusters) +
                      " orthogonal centroids in b=" + std::to_string(cfg.embed_dim) + " dimensions");
  }
  if (cfg.init == CentroidInit::RandomOrthonormal) {
    return {random_orthonormal_rows(cfg.clusters, cfg.embed_dim, seed), 0};
  }
  Matrix c(cfg.clusters, cfg.embed_dim);
  for (std::size_t j = 0; j < cfg.clusters; ++j) c(j, j) = 1.0;
  return {std::move(c), 0};
}

StackTrace run_stack(const Matrix& z, const BlockStackConfig& cfg, const ScoreParams& sp,
                     std::uint64_t seed) {
  cfg.validate();
  if (z.cols() != cfg.embed_dim) {
    throw ShapeError("run_stack: embeddings have " + std::to_string(z.cols()) +
                     " columns, stack expects b=" + std::to_string(cfg.embed_dim));
  }
  sp.validate();
  const Matrix wq = sp.effective_wq();
  const Matrix wk = sp.effective_wk();
  StackTrace trace;
  trace.states.push_back(init_centroids(cfg, seed));
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    const CentroidState& current = trace.states.back();
    const Matrix q = pairwise_bilinear_forms(z, current.centroids, wq, wk);
    AssignmentMatrix delta{softmax_rows(negated_activation(q, sp.activation), sp.tau)};
    CentroidState next = update_centroids(z, delta, current, cfg.global_normalization);
    trace.assignments.push_back(std::move(delta));
    trace.states.push_back(std::move(next));
  }
  return trace;
}

std::vector<Matrix> ModelParams::flatten() const {
  std::vector<Matrix> flat;
  flat.reserve(flat_count());
  for (const DenseLayer& layer : encoder.layers) {
    flat.push_back(layer.weight);
    flat.push_back(layer.bias);
  }
  flat.push_back(score.wq_raw);
  flat.push_back(score.wk_raw);
  return flat;
}

void ModelParams::assign_flat(std::span<const Matrix> flat) {
  if (flat.size() != flat_count()) throw ShapeError("assign_flat: wrong parameter count");
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    require_same_shape(encoder.layers[l].weight, flat[2 * l], "assign_flat");
    require_same_shape(encoder.layers[l].bias, flat[2 * l + 1], "assign_flat");
    encoder.layers[l].weight = flat[2 * l];
    encoder.layers[l].bias = flat[2 * l + 1];
  }
  require_same_shape(score.wq_raw, flat[flat.size() - 2], "assign_flat");
  require_same_shape(score.wk_raw, flat[flat.size() - 1], "assign_flat");
  score.wq_raw = flat[flat.size() - 2];
  score.wk_raw = flat[flat.size() - 1];
}

namespace taped {

ad::Var encode(ad::Tape& tape, std::span<const ad::Var> layer_params, ad::Var x,
               const ActivationKind& hidden_activation, bool standardize_output) {
  (void)tape;
  if (layer_params.size() % 2 != 0 || layer_params.empty()) {
    throw ShapeError("taped::encode: expected (weight, bias) pairs");
  }
  const std::size_t n_layers = layer_params.size() / 2;
  ad::Var h = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = ad::add_row(ad::matmul(h, layer_params[2 * l]), layer_params[2 * l + 1]);
    if (l + 1 < n_layers) h = ad::activate(h, hidden_activation);
  }
  return standardize_output ? ad::standardize_columns(h, kStandardizeEps) : h;
}

std::pair<ad::Var, ad::Var> effective_weights(ad::Tape& tape, ad::Var wq_raw, ad::Var wk_raw,
                                              const ScoreParams& settings) {
  switch (settings.mode) {
    case ScoreMode::Symmetric: return {ad::symmetrize(wq_raw), ad::symmetrize(wk_raw)};
    case ScoreMode::Raw: return {wq_raw, wk_raw};
    case ScoreMode::PsdTied: {
      const std::size_t b = wq_raw.value().rows();
      ad::Var w = ad::add(ad::matmul_bt(wq_raw, wq_raw),
                          tape.constant(scaled(Matrix::identity(b), settings.psd_epsilon)));
      return {w, w};
    }
  }
  return {wq_raw, wk_raw};
}

StackNodes run_stack(ad::Tape& tape, ad::Var embeddings, ad::Var wq, ad::Var wk,
                     const Matrix& initial_centroids, const BlockStackConfig& cfg,
                     const ScoreParams& settings) {
  cfg.validate();
  if (!(settings.tau > 0.0)) throw ParameterError("temperature tau must be positive");
  StackNodes nodes;
  nodes.embeddings = embeddings;
  nodes.wq = wq;
  nodes.wk = wk;
  nodes.centroids.push_back(tape.constant(initial_centroids));
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    ad::Var current = nodes.centroids.back();
    ad::Var q = ad::pairwise_bilinear(embeddings, current, wq, wk);
    ad::Var neg_act = ad::neg(ad::activate(q, settings.activation));
    ad::Var delta = ad::softmax_rows(neg_act, settings.tau);
    nodes.scores.push_back(ad::scale(neg_act, 1.0 / settings.tau));
    nodes.assignments.push_back(delta);
    nodes.centroids.push_back(
        ad::centroid_update(embeddings, delta, current, cfg.global_normalization));
  }
  return nodes;
}

StackNodes forward(ad::Tape& tape, std::span<const ad::Var> flat_params, const Matrix& x,
                   const Matrix& initial_centroids, const BlockStackConfig& cfg,
                   const ScoreParams& settings, const ActivationKind& hidden_activation,
                   bool standardize_output) {
  if (flat_params.size() < 4 || flat_params.size() % 2 != 0) {
    throw ShapeError("taped::forward: malformed parameter list");
  }
  const std::size_t n_enc = flat_params.size() - 2;
  ad::Var z = encode(tape, flat_params.first(n_enc), tape.constant(x), hidden_activation,
                     standardize_output);
  auto [wq, wk] = effective_weights(tape, flat_params[n_enc], flat_params[n_enc + 1], settings);
  return run_stack(tape, z, wq, wk, initial_centroids, cfg, settings);
}

}  // namespace taped

}  // namespace tdcm
