#include "tdcm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tdcm/error.hpp"

namespace tdcm {

namespace {

enum class Kind { Real, Count, Flag, Text };

struct KeyInfo {
  ConfigKey key;
  Kind kind;
};

const std::vector<KeyInfo>& table() {
  static const std::vector<KeyInfo> keys = {
      // data
      {{"k", "2", "number of clusters K"}, Kind::Count},
      {{"dim", "2", "input dimension d"}, Kind::Count},
      {{"n_per_cluster", "200", "samples per cluster in each domain"}, Kind::Count},
      {{"center_box", "5", "cluster centres are uniform in [-box, box]^d"}, Kind::Real},
      {{"cov_scale", "1", "scale of the random per-cluster covariance"}, Kind::Real},
      {{"data_seed", "0", "seed of the source domain"}, Kind::Count},
      {{"perturbation", "0.5", "target centre shift as a multiple of the mean centre distance"}, Kind::Real},
      // model
      {{"embed_dim", "0", "embedding dimension b; 0 means max(K, d)"}, Kind::Count},
      {{"hidden_dim", "32", "encoder hidden width"}, Kind::Count},
      {{"encoder_layers", "3", "number of dense encoder layers"}, Kind::Count},
      {{"encoder_activation", "relu", "encoder hidden activation: identity, relu or leaky_relu"}, Kind::Text},
      {{"embedding_norm", "batch", "encoder output normalisation: batch or none"}, Kind::Text},
      {{"num_blocks", "4", "number of centroid-updating blocks L"}, Kind::Count},
      {{"tau", "1", "softmax temperature"}, Kind::Real},
      {{"activation", "relu", "score activation: identity, relu or leaky_relu"}, Kind::Text},
      {{"leaky_slope", "0.01", "slope of leaky_relu for negative inputs"}, Kind::Real},
      {{"score_mode", "symmetric", "symmetric, raw or psd"}, Kind::Text},
      {{"centroid_init", "identity", "identity or orthonormal"}, Kind::Text},
      {{"global_normalization", "false", "normalise centroid updates by total mass"}, Kind::Flag},
      // loss
      {{"alpha_mode", "linear", "per-block loss weights: linear, last or uniform"}, Kind::Text},
      {{"beta", "1", "entropy weight"}, Kind::Real},
      {{"lambda_orth", "1", "orthogonality penalty weight"}, Kind::Real},
      {{"literal_entropy_sign", "false", "use the entropy term with its sign flipped"}, Kind::Flag},
      // training
      {{"epochs", "500", "training epochs"}, Kind::Count},
      {{"batch_size", "256", "minibatch size"}, Kind::Count},
      {{"learning_rate", "0.005", "Adam learning rate"}, Kind::Real},
      {{"weight_decay", "0.0005", "decoupled weight decay"}, Kind::Real},
      {{"seed", "0", "model and shuffling seed"}, Kind::Count},
      {{"eval_batch", "0", "evaluation chunk size; 0 means the whole set"}, Kind::Count},
      // ablations
      {{"variant_r", "false", "drop the symmetry constraint on W_Q and W_K"}, Kind::Flag},
      {{"variant_o", "false", "drop the orthogonality penalty"}, Kind::Flag},
      {{"variant_e", "false", "drop the entropy term"}, Kind::Flag},
      // baselines
      {{"baseline", "kmeans", "kmeans, gmm or soft-kmeans"}, Kind::Text},
      {{"baseline_restarts", "10", "k-means++ restarts; the lowest inertia wins"}, Kind::Count},
      {{"baseline_max_iter", "300", "iteration cap for k-means and EM"}, Kind::Count},
      {{"baseline_tol", "1e-8", "convergence tolerance for k-means and EM"}, Kind::Real},
      // orchestration
      {{"seeds", "5", "runs per condition"}, Kind::Count},
      {{"num_pairs", "1", "generated domain pairs"}, Kind::Count},
      {{"jobs", "1", "parallel jobs"}, Kind::Count},
  };
  return keys;
}

const KeyInfo* find_key(const std::string& name) {
  for (const auto& k : table()) {
    if (name == k.key.name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

void check_choice(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (v == a) return;
    list += list.empty() ? a : std::string(", ") + a;
  }
  throw ConfigError("config key '" + key + "': '" + v + "' is not one of " + list);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& k : table()) out.push_back(k.key);
    return out;
  }();
  return keys;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : table()) values_[k.key.name] = k.key.default_value;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const KeyInfo* info = find_key(key);
  if (info == nullptr) throw ConfigError("unknown config key '" + key + "'");
  // Normalise so that dumps and equality do not depend on spelling.
  switch (info->kind) {
    case Kind::Flag: values_[key] = to_bool(key, value) ? "true" : "false"; break;
    case Kind::Count: values_[key] = std::to_string(to_uint(key, value)); break;
    case Kind::Real: to_double(key, value); values_[key] = value; break;
    case Kind::Text: values_[key] = value; break;
  }
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) != 0; }

double ExperimentConfig::get_double(const std::string& key) const { return to_double(key, get(key)); }
std::uint64_t ExperimentConfig::get_uint(const std::string& key) const { return to_uint(key, get(key)); }
bool ExperimentConfig::get_bool(const std::string& key) const { return to_bool(key, get(key)); }

void ExperimentConfig::validate() const {
  for (const auto& k : table()) {
    const std::string name = k.key.name;
    switch (k.kind) {
      case Kind::Real: get_double(name); break;
      case Kind::Count: get_uint(name); break;
      case Kind::Flag: get_bool(name); break;
      case Kind::Text: break;
    }
  }
  check_choice("activation", get("activation"), {"identity", "relu", "leaky_relu"});
  check_choice("encoder_activation", get("encoder_activation"), {"identity", "relu", "leaky_relu"});
  check_choice("embedding_norm", get("embedding_norm"), {"batch", "none"});
  check_choice("score_mode", get("score_mode"), {"symmetric", "raw", "psd"});
  check_choice("centroid_init", get("centroid_init"), {"identity", "orthonormal"});
  check_choice("alpha_mode", get("alpha_mode"), {"linear", "last", "uniform"});
  check_choice("baseline", get("baseline"), {"kmeans", "gmm", "soft-kmeans"});

  auto positive = [&](const char* key) {
    if (!(get_double(key) > 0.0)) throw ConfigError(std::string("config key '") + key + "' must be positive");
  };
  auto at_least = [&](const char* key, std::uint64_t lo) {
    if (get_uint(key) < lo) {
      throw ConfigError(std::string("config key '") + key + "' must be at least " + std::to_string(lo));
    }
  };
  positive("tau");
  positive("learning_rate");
  positive("center_box");
  positive("cov_scale");
  positive("baseline_tol");
  for (const char* key : {"beta", "lambda_orth", "weight_decay", "perturbation"}) {
    if (get_double(key) < 0.0) throw ConfigError(std::string("config key '") + key + "' must be >= 0");
  }
  const double slope = get_double("leaky_slope");
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("config key 'leaky_slope' must lie in (0, 1)");
  at_least("k", 2);
  at_least("dim", 1);
  at_least("n_per_cluster", 1);
  at_least("hidden_dim", 1);
  at_least("encoder_layers", 1);
  at_least("num_blocks", 1);
  at_least("batch_size", 1);
  at_least("seeds", 1);
  at_least("num_pairs", 1);
  at_least("jobs", 1);
  at_least("baseline_max_iter", 1);
  at_least("baseline_restarts", 1);
  const std::uint64_t b = get_uint("embed_dim");
  if (b != 0 && b < get_uint("k")) {
    throw ConfigError("embed_dim (" + std::to_string(b) + ") must be at least k (" + get("k") + ")");
  }
}

std::string ExperimentConfig::dump() const {
  std::ostringstream out;
  for (const auto& k : table()) out << k.key.name << " = " << get(k.key.name) << '\n';
  return out.str();
}

}  // namespace tdcm
