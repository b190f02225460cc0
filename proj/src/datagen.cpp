#include "tdcm/datagen.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"
#include <numeric>
#include <random>
#include <sstream>

#include "tdcm/error.hpp"

namespace tdcm {

void DomainSpec::validate() const {
  if (clusters < 2) throw ConfigError("domain needs K >= 2 clusters");
  if (dim < 1) throw ConfigError("domain dimension must be positive");
  if (n_per_cluster < 1) throw ConfigError("n_per_cluster must be at least 1");
  if (!(cov_scale > 0.0)) throw ConfigError("cov_scale must be positive");
  if (!(center_box > 0.0)) throw ConfigError("center_box must be positive");
}

namespace {

Matrix sample_covariance(std::size_t d, double cov_scale, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix a(d, d);
  for (double& v : a.values()) v = gauss(rng);
  Matrix cov = scaled(matmul_bt(a, a), cov_scale / static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i) cov(i, i) += 0.05;
  return symmetrize(cov);
}

void draw_samples(Domain& domain, std::size_t n_per_cluster, std::mt19937_64& rng) {
  const std::size_t k = domain.centers.rows();
  const std::size_t d = domain.centers.cols();
  std::normal_distribution<double> gauss(0.0, 1.0);
  domain.x = Matrix(k * n_per_cluster, d);
  domain.labels.assign(k * n_per_cluster, 0);
  Eigen::VectorXd g(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < k; ++j) {
    const Matrix& cov = domain.covariances[j];
    Eigen::MatrixXd c(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s)
        c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = cov(r, s);
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(c).matrixL();
    for (std::size_t s = 0; s < n_per_cluster; ++s) {
      for (Eigen::Index t = 0; t < g.size(); ++t) g(t) = gauss(rng);
      const Eigen::VectorXd offset = l * g;
      const std::size_t row = j * n_per_cluster + s;
      domain.labels[row] = static_cast<int>(j);
      for (std::size_t t = 0; t < d; ++t) {
        domain.x(row, t) = domain.centers(j, t) + offset(static_cast<Eigen::Index>(t));
      }
    }
  }
}

}  // namespace

Domain gen_source(const DomainSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> box(-spec.center_box, spec.center_box);
  Domain domain;
  domain.centers = Matrix(spec.clusters, spec.dim);
  for (double& v : domain.centers.values()) v = box(rng);
  for (std::size_t j = 0; j < spec.clusters; ++j) {
    domain.covariances.push_back(sample_covariance(spec.dim, spec.cov_scale, rng));
  }
  draw_samples(domain, spec.n_per_cluster, rng);
  return domain;
}

double mean_pairwise_distance(const Matrix& centers) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < centers.rows(); ++i) {
    for (std::size_t j = i + 1; j < centers.rows(); ++j) {
      total += std::sqrt(squared_distance(centers.row(i), centers.row(j)));
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

Domain perturb_to_target(const Domain& source, std::size_t n_per_cluster, double perturbation_scale,
                         std::uint64_t seed) {
  if (!(perturbation_scale >= 0.0)) throw ConfigError("perturbation_scale must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double spread = perturbation_scale * mean_pairwise_distance(source.centers);
  Domain target;
  target.centers = source.centers;
  target.covariances = source.covariances;
  const std::size_t d = source.centers.cols();
  std::vector<double> dir(d);
  for (std::size_t j = 0; j < target.centers.rows(); ++j) {
    double norm = 0.0;
    while (norm < 1e-12) {
      for (double& v : dir) v = gauss(rng);
      norm = std::sqrt(dot(dir, dir));
    }
    const double magnitude = gauss(rng) * spread;
    if (perturbation_scale == 0.0) continue;
    for (std::size_t t = 0; t < d; ++t) target.centers(j, t) += magnitude * dir[t] / norm;
  }
  draw_samples(target, n_per_cluster, rng);
  return target;
}

DomainPair make_domain_pair(const DomainSpec& spec, double perturbation_scale,
                            std::uint64_t target_seed) {
  DomainPair pair;
  pair.spec = spec;
  pair.source = gen_source(spec);
  pair.target = perturb_to_target(pair.source, spec.n_per_cluster, perturbation_scale, target_seed);
  pair.perturbation_scale = perturbation_scale;
  pair.target_seed = target_seed;
  return pair;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::string& path, std::size_t line) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) {
    throw ParseError(path + ":" + std::to_string(line) + ": non-numeric value '" + t + "'");
  }
  return value;
}

}  // namespace

TabularData load_tabular(const std::string& path, bool has_labels) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header row");
  const auto header = split_csv(line);
  std::size_t d = 0;
  bool label_column = false;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = trim(header[i]);
    if (h == "f" + std::to_string(i)) {
      if (label_column) throw ParseError(path + ":1: feature column after label column");
      ++d;
    } else if (h == "label" && i + 1 == header.size()) {
      label_column = true;
    } else {
      throw ParseError(path + ":1: unknown header field '" + h + "'");
    }
  }
  if (d == 0) throw ParseError(path + ":1: header declares no feature columns");
  if (has_labels && !label_column) throw ParseError(path + ":1: expected a 'label' column");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < d; ++i) values.push_back(parse_number(fields[i], path, line_no));
    if (label_column) {
      const double lab = parse_number(fields[d], path, line_no);
      if (lab < 0.0 || lab != std::floor(lab)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
      }
      labels.push_back(static_cast<int>(lab));
    }
    ++rows;
  }
  TabularData out;
  out.x = Matrix(rows, d, std::move(values));
  if (has_labels) out.labels = std::move(labels);
  return out;
}

void save_tabular(const std::string& path, const Matrix& x, const std::vector<int>* labels) {
  if (labels != nullptr && labels->size() != x.rows()) {
    throw ShapeError("save_tabular: label count does not match row count");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (std::size_t c = 0; c < x.cols(); ++c) out << (c ? "," : "") << 'f' << c;
  if (labels != nullptr) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", x(r, c));
      out << (c ? "," : "") << buf;
    }
    if (labels != nullptr) out << ',' << (*labels)[r];
    out << '\n';
  }
  if (!out) throw IoError("failed while writing '" + path + "'");
}

std::string domain_pair_metadata(const DomainPair& pair, const std::string& source_file,
                                 const std::string& target_file) {
  auto rows = [](const Matrix& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      arr.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return arr;
  };
  nlohmann::json j;
  j["format"] = "tdcm-domain-pair";
  j["version"] = 1;
  j["spec"] = {{"k", pair.spec.clusters},
               {"dim", pair.spec.dim},
               {"n_per_cluster", pair.spec.n_per_cluster},
               {"center_box", pair.spec.center_box},
               {"cov_scale", pair.spec.cov_scale},
               {"seed", pair.spec.seed}};
  j["perturbation_scale"] = pair.perturbation_scale;
  j["target_seed"] = pair.target_seed;
  j["mean_pairwise_center_distance"] = mean_pairwise_distance(pair.source.centers);
  j["source_centers"] = rows(pair.source.centers);
  j["target_centers"] = rows(pair.target.centers);
  j["files"] = {{"source", source_file}, {"target", target_file}};
  return j.dump(2);
}

std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace tdcm
