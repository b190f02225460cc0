#pragma once

// Synthetic Gaussian source/target domains with a controlled centre shift,
// CSV ingestion and minibatch index generation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tdcm/core_math.hpp"

namespace tdcm {

struct DomainSpec {
  std::size_t clusters = 2;
  std::size_t dim = 16;
  std::size_t n_per_cluster = 500;
  double center_box = 5.0;
  double cov_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Domain {
  Matrix x;
  std::vector<int> labels;
  Matrix centers;                   // K x d
  std::vector<Matrix> covariances;  // K of d x d
};

struct DomainPair {
  DomainSpec spec;
  Domain source;
  Domain target;
  double perturbation_scale = 0.0;
  std::uint64_t target_seed = 0;
};

// Centres uniform in [-center_box, center_box]^d, covariance
// A A^T * cov_scale / d + 0.05 I with A a seeded Gaussian d x d matrix,
// n_per_cluster samples per cluster, rows grouped by cluster.
Domain gen_source(const DomainSpec& spec);

double mean_pairwise_distance(const Matrix& centers);

// Every centre moves by g * perturbation_scale * D along a uniformly random
// direction, g ~ N(0, 1) and D the mean pairwise source-centre distance.
// Covariances are reused and fresh samples are drawn.
Domain perturb_to_target(const Domain& source, std::size_t n_per_cluster, double perturbation_scale,
                         std::uint64_t seed);

DomainPair make_domain_pair(const DomainSpec& spec, double perturbation_scale,
                            std::uint64_t target_seed);

struct TabularData {
  Matrix x;
  std::optional<std::vector<int>> labels;
};

// Header "f0,...,f{d-1}[,label]"; malformed input raises ParseError naming the line.
TabularData load_tabular(const std::string& path, bool has_labels);
void save_tabular(const std::string& path, const Matrix& x, const std::vector<int>* labels);

// JSON sidecar describing a generated pair (spec, seeds, centres).
std::string domain_pair_metadata(const DomainPair& pair, const std::string& source_file,
                                 const std::string& target_file);

// Seeded shuffle of 0..n-1 cut into consecutive batches; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t shuffle_seed);

}  // namespace tdcm
