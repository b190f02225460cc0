#include "tdcm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tdcm/error.hpp"

namespace tdcm {

using nlohmann::json;

AdamState AdamState::zeros_like(const std::vector<Matrix>& params) {
  AdamState s;
  for (const Matrix& p : params) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state,
               const AdamOptions& o) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step");
    require_same_shape(params[i], state.m[i], "adam_step");
    require_same_shape(params[i], state.v[i], "adam_step");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - o.learning_rate * o.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] = p[j] * decay - o.learning_rate * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (adam.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (input_dim < 1) throw ConfigError("input dimension must be positive");
  if (encoder_layers < 1 || hidden_dim < 1) throw ConfigError("encoder needs at least one layer");
  stack.validate();
  if (weights.alpha.size() != stack.num_blocks) {
    throw ConfigError("alpha schedule length differs from the number of blocks");
  }
  if (!(score.tau > 0.0)) throw ConfigError("tau must be positive");
}

ScoreParams TrainConfig::effective_score_settings() const {
  ScoreParams s = score;
  if (variant_r) s.mode = ScoreMode::Raw;
  return s;
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (variant_o) w.lambda_orth = 0.0;
  if (variant_e) w.beta = 0.0;
  return w;
}

TrainConfig make_train_config(const ExperimentConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  TrainConfig tc;
  tc.epochs = cfg.get_size("epochs");
  tc.batch_size = cfg.get_size("batch_size");
  tc.adam.learning_rate = cfg.get_double("learning_rate");
  tc.adam.weight_decay = cfg.get_double("weight_decay");
  tc.seed = cfg.get_uint("seed");
  tc.eval_batch = cfg.get_size("eval_batch");
  tc.input_dim = input_dim;
  tc.hidden_dim = cfg.get_size("hidden_dim");
  tc.encoder_layers = cfg.get_size("encoder_layers");
  tc.hidden_activation = ActivationKind::parse(cfg.get("encoder_activation"), cfg.get_double("leaky_slope"));
  tc.standardize_embeddings = cfg.get("embedding_norm") == "batch";

  const std::size_t k = cfg.get_size("k");
  std::size_t b = cfg.get_size("embed_dim");
  if (b == 0) b = std::max(k, input_dim);
  tc.stack.num_blocks = cfg.get_size("num_blocks");
  tc.stack.embed_dim = b;
  tc.stack.clusters = k;
  tc.stack.init = cfg.get("centroid_init") == "orthonormal" ? CentroidInit::RandomOrthonormal
                                                            : CentroidInit::Identity;
  tc.stack.global_normalization = cfg.get_bool("global_normalization");

  tc.score.activation = ActivationKind::parse(cfg.get("activation"), cfg.get_double("leaky_slope"));
  tc.score.tau = cfg.get_double("tau");
  const std::string mode = cfg.get("score_mode");
  tc.score.mode = mode == "raw" ? ScoreMode::Raw : mode == "psd" ? ScoreMode::PsdTied : ScoreMode::Symmetric;

  tc.weights = LossWeights::defaults(tc.stack.num_blocks, parse_alpha_mode(cfg.get("alpha_mode")));
  tc.weights.beta = cfg.get_double("beta");
  tc.weights.lambda_orth = cfg.get_double("lambda_orth");
  tc.weights.literal_entropy_sign = cfg.get_bool("literal_entropy_sign");

  tc.variant_r = cfg.get_bool("variant_r");
  tc.variant_o = cfg.get_bool("variant_o");
  tc.variant_e = cfg.get_bool("variant_e");
  tc.validate();
  return tc;
}

ModelParams init_model(const TrainConfig& tc) {
  tc.validate();
  std::mt19937_64 rng(tc.seed);
  const std::uint64_t encoder_seed = rng();
  ModelParams mp;
  mp.encoder = EncoderParams::mlp(tc.input_dim, tc.hidden_dim, tc.stack.embed_dim, tc.encoder_layers,
                                  encoder_seed);
  mp.encoder.hidden_activation = tc.hidden_activation;
  mp.encoder.standardize_output = tc.standardize_embeddings;
  mp.score = tc.effective_score_settings();
  // Identity plus a small perturbation, so the raw and symmetric variants differ from the start.
  std::normal_distribution<double> gauss(0.0, 0.01);
  const std::size_t b = tc.stack.embed_dim;
  mp.score.wq_raw = Matrix::identity(b);
  mp.score.wk_raw = Matrix::identity(b);
  for (double& v : mp.score.wq_raw.values()) v += gauss(rng);
  for (double& v : mp.score.wk_raw.values()) v += gauss(rng);
  return mp;
}

namespace {

std::string format_breakdown(const LossBreakdown& b) {
  std::ostringstream s;
  s.precision(17);
  s << "clustering=" << b.clustering << " entropy=" << b.entropy << " orthogonality=" << b.orthogonality
    << " total=" << b.total;
  return s.str();
}

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.clustering) && std::isfinite(b.entropy) && std::isfinite(b.orthogonality) &&
         std::isfinite(b.total);
}

}  // namespace

Checkpoint train(const Matrix& x, const ExperimentConfig& cfg) {
  if (!x.all_finite()) throw DomainError("training data contains non-finite values");
  const TrainConfig tc = make_train_config(cfg, x.cols());
  if (x.rows() < 1) throw ConfigError("training data is empty");

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.input_dim = x.cols();
  ckpt.params = init_model(tc);

  const ScoreParams settings = tc.effective_score_settings();
  const LossWeights weights = tc.effective_weights();
  const Matrix c0 = init_centroids(tc.stack, tc.seed).centroids;
  std::vector<Matrix> flat = ckpt.params.flatten();
  ckpt.adam = AdamState::zeros_like(flat);
  // Stream distinct from the one used for initialisation.
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);

  LossBreakdown last_finite;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto batches = batch_iterator(x.rows(), tc.batch_size, rng());
    LossBreakdown mean;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Matrix xb = select_rows(x, batches[bi]);
      ad::Tape tape;
      std::vector<ad::Var> vars;
      vars.reserve(flat.size());
      for (const Matrix& p : flat) vars.push_back(tape.variable(p));
      const auto stack = taped::forward(tape, vars, xb, c0, tc.stack, settings, tc.hidden_activation,
                                          tc.standardize_embeddings);
      const auto loss = taped::total_loss(tape, stack, weights);
      const LossBreakdown lb{loss.clustering.scalar(), loss.entropy.scalar(), loss.orthogonality.scalar(),
                             loss.total.scalar()};
      if (!finite(lb)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(bi) + "; last finite loss: " + format_breakdown(last_finite));
      }
      last_finite = lb;
      tape.backward(loss.total);
      std::vector<Matrix> grads;
      grads.reserve(vars.size());
      for (const ad::Var& v : vars) grads.push_back(tape.gradient(v));
      adam_step(flat, grads, ckpt.adam, tc.adam);

      const double share = 1.0 / static_cast<double>(batches.size());
      mean.clustering += lb.clustering * share;
      mean.entropy += lb.entropy * share;
      mean.orthogonality += lb.orthogonality * share;
      mean.total += lb.total * share;
    }
    ckpt.loss_history.push_back(mean);
    ckpt.epoch = epoch + 1;
  }
  ckpt.params.assign_flat(flat);
  std::ostringstream rs;
  rs << rng;
  ckpt.rng_state = rs.str();
  return ckpt;
}

StackTrace infer_trace(const Checkpoint& ckpt, const Matrix& x) {
  if (x.cols() != ckpt.input_dim) {
    throw ConfigError("data has " + std::to_string(x.cols()) + " features but the model expects " +
                      std::to_string(ckpt.input_dim));
  }
  const TrainConfig tc = ckpt.train_config();
  const Matrix z = encode(ckpt.params.encoder, x);
  return run_stack(z, tc.stack, ckpt.params.score, tc.seed);
}

std::vector<int> infer_labels(const Checkpoint& ckpt, const Matrix& x) {
  const std::size_t chunk = ckpt.train_config().eval_batch;
  if (chunk == 0 || chunk >= x.rows()) return infer_trace(ckpt, x).labels();
  std::vector<int> labels;
  labels.reserve(x.rows());
  for (std::size_t start = 0; start < x.rows(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t r = start; r < std::min(x.rows(), start + chunk); ++r) idx.push_back(r);
    const auto part = infer_trace(ckpt, select_rows(x, idx)).labels();
    labels.insert(labels.end(), part.begin(), part.end());
  }
  return labels;
}

RunRecord evaluate_transfer(const Checkpoint& ckpt, const Domain& source, const Domain& target) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord r;
  r.model = "tdcm";
  if (ckpt.config.get_bool("variant_r")) r.model += "-R";
  if (ckpt.config.get_bool("variant_o")) r.model += "-O";
  if (ckpt.config.get_bool("variant_e")) r.model += "-E";
  r.config = ckpt.config;
  r.loss_history = ckpt.loss_history;
  r.source = evaluate_clustering(infer_labels(ckpt, source.x), source.labels);
  r.target = evaluate_clustering(infer_labels(ckpt, target.x), target.labels);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---- serialisation -------------------------------------------------------

namespace {

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw PersistenceError("tensor payload does not match its shape");
  return Matrix(rows, cols, std::move(data));
}

json matrices_json(const std::vector<Matrix>& ms) {
  json arr = json::array();
  for (const Matrix& m : ms) arr.push_back(matrix_json(m));
  return arr;
}

std::vector<Matrix> matrices_from(const json& j) {
  std::vector<Matrix> out;
  for (const auto& e : j) out.push_back(matrix_from(e));
  return out;
}

json config_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.values()) j[k] = v;
  return j;
}

ExperimentConfig config_from(const json& j) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : j.items()) cfg.set(k, v.get<std::string>());
  return cfg;
}

json breakdowns_json(const std::vector<LossBreakdown>& h) {
  json arr = json::array();
  for (const auto& b : h) {
    arr.push_back({{"clustering", b.clustering}, {"entropy", b.entropy}, {"orthogonality", b.orthogonality},
                   {"total", b.total}});
  }
  return arr;
}

std::vector<LossBreakdown> breakdowns_from(const json& j) {
  std::vector<LossBreakdown> out;
  for (const auto& e : j) {
    out.push_back({e.at("clustering").get<double>(), e.at("entropy").get<double>(),
                   e.at("orthogonality").get<double>(), e.at("total").get<double>()});
  }
  return out;
}

json metrics_json(const MetricsReport& m) { return {{"nmi", m.nmi}, {"ari", m.ari}, {"acc", m.acc}}; }

MetricsReport metrics_from(const json& j) {
  return {j.at("nmi").get<double>(), j.at("ari").get<double>(), j.at("acc").get<double>()};
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format"] = "tdcm-checkpoint";
  j["version"] = ckpt.version;
  j["config"] = config_json(ckpt.config);
  j["input_dim"] = ckpt.input_dim;
  const std::vector<Matrix> flat = ckpt.params.flatten();
  j["encoder"] = matrices_json(std::vector<Matrix>(flat.begin(), flat.end() - 2));
  j["wq_raw"] = matrix_json(ckpt.params.score.wq_raw);
  j["wk_raw"] = matrix_json(ckpt.params.score.wk_raw);
  j["adam"] = {{"m", matrices_json(ckpt.adam.m)}, {"v", matrices_json(ckpt.adam.v)}, {"step", ckpt.adam.step}};
  j["epoch"] = ckpt.epoch;
  j["rng_state"] = ckpt.rng_state;
  j["loss_history"] = breakdowns_json(ckpt.loss_history);
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw PersistenceError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "tdcm-checkpoint") {
      throw PersistenceError("file is not a TDCM checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw PersistenceError("checkpoint version " + std::to_string(version) +
                             " is incompatible with this build (expects " +
                             std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.config = config_from(j.at("config"));
    ckpt.input_dim = j.at("input_dim").get<std::size_t>();
    const TrainConfig tc = make_train_config(ckpt.config, ckpt.input_dim);
    const auto enc = matrices_from(j.at("encoder"));
    if (enc.size() % 2 != 0 || enc.empty()) throw PersistenceError("malformed encoder tensors");
    for (std::size_t l = 0; l < enc.size(); l += 2) ckpt.params.encoder.layers.push_back({enc[l], enc[l + 1]});
    ckpt.params.encoder.hidden_activation = tc.hidden_activation;
    ckpt.params.encoder.standardize_output = tc.standardize_embeddings;
    ckpt.params.encoder.validate();
    ckpt.params.score = tc.effective_score_settings();
    ckpt.params.score.wq_raw = matrix_from(j.at("wq_raw"));
    ckpt.params.score.wk_raw = matrix_from(j.at("wk_raw"));
    ckpt.params.score.validate();
    if (ckpt.params.encoder.input_dim() != ckpt.input_dim ||
        ckpt.params.encoder.output_dim() != tc.stack.embed_dim ||
        ckpt.params.score.dim() != tc.stack.embed_dim) {
      throw PersistenceError("checkpoint tensors disagree with the stored configuration");
    }
    const json& adam = j.at("adam");
    ckpt.adam.m = matrices_from(adam.at("m"));
    ckpt.adam.v = matrices_from(adam.at("v"));
    ckpt.adam.step = adam.at("step").get<std::uint64_t>();
    ckpt.epoch = j.at("epoch").get<std::size_t>();
    ckpt.rng_state = j.at("rng_state").get<std::string>();
    ckpt.loss_history = breakdowns_from(j.at("loss_history"));
    return ckpt;
  } catch (const json::exception& e) {
    throw PersistenceError(std::string("malformed checkpoint: ") + e.what());
  } catch (const PersistenceError&) {
    throw;
  } catch (const Error& e) {
    throw PersistenceError(std::string("invalid checkpoint contents: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string text = checkpoint_to_json(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistenceError("cannot write checkpoint '" + path + "'");
  out << text;
  if (!out) throw PersistenceError("failed while writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

std::string run_record_to_json(const RunRecord& r) {
  json j;
  j["format"] = "tdcm-run-record";
  j["version"] = 1;
  j["model"] = r.model;
  j["config"] = config_json(r.config);
  j["pair_seed"] = r.pair_seed;
  j["loss_history"] = breakdowns_json(r.loss_history);
  j["source"] = metrics_json(r.source);
  j["target"] = metrics_json(r.target);
  j["diff"] = metrics_json(r.diff());
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2);
}

RunRecord run_record_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "tdcm-run-record") throw ParseError("not a run record");
    RunRecord r;
    r.model = j.at("model").get<std::string>();
    r.config = config_from(j.at("config"));
    r.pair_seed = j.at("pair_seed").get<std::uint64_t>();
    r.loss_history = breakdowns_from(j.at("loss_history"));
    r.source = metrics_from(j.at("source"));
    r.target = metrics_from(j.at("target"));
    r.wall_seconds = j.at("wall_seconds").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run record: ") + e.what());
  }
}

}  // namespace tdcm
