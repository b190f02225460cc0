#pragma once

// Classical clustering baselines: Lloyd's k-means, one soft k-means step and
// EM for a Gaussian mixture with uniform weights and one shared covariance.
// They double as reference implementations for the special cases of the
// learned score function.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tdcm/core_math.hpp"

namespace tdcm {

struct KMeansResult {
  Matrix centroids;
  std::vector<int> labels;
  double inertia = 0.0;
  std::size_t iterations = 0;
  // Inertia after each assignment step.
  std::vector<double> inertia_history;
};

// Index of the nearest centroid per row (squared Euclidean, ties to the lowest index).
std::vector<int> nearest_centroid_labels(const Matrix& z, const Matrix& centroids);
double inertia(const Matrix& z, const Matrix& centroids, const std::vector<int>& labels);

KMeansResult kmeans_lloyd(const Matrix& z, std::size_t k, const Matrix& init,
                          std::size_t max_iter = 300, double tol = 1e-8);

// Seeded k-means++ seeding.
Matrix kmeans_plus_plus_init(const Matrix& z, std::size_t k, std::uint64_t seed);

struct SoftKMeansStep {
  Matrix delta;      // N x K responsibilities
  Matrix centroids;  // K x b
};

SoftKMeansStep soft_kmeans_step(const Matrix& z, const Matrix& centroids, double tau);

struct GmmResult {
  Matrix means;
  Matrix shared_covariance;
  std::vector<double> weights;
  Matrix responsibilities;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  std::vector<double> log_likelihood_history;
};

struct GmmOptions {
  std::size_t max_iter = 300;
  double tol = 1e-8;
  // Fixed covariance reproduces the shared-metric special case exactly.
  bool update_covariance = false;
  // Added to the diagonal after each covariance re-estimate. Non-zero values
  // make the M-step inexact, so the likelihood need not be monotone.
  double covariance_floor = 0.0;
};

// E-step responsibilities for uniform weights and a shared covariance.
Matrix gmm_responsibilities(const Matrix& z, const Matrix& means, const Matrix& covariance);
double gmm_log_likelihood(const Matrix& z, const Matrix& means, const Matrix& covariance);

GmmResult gmm_em_shared(const Matrix& z, std::size_t k, const Matrix& init_means,
                        const Matrix& shared_cov_init, const GmmOptions& options = {});

enum class BaselineKind { KMeans, Gmm, SoftKMeans };

std::string baseline_name(BaselineKind kind);
BaselineKind parse_baseline(const std::string& name);

// Frozen-centroid transfer: nearest centroid for k-means, maximum
// responsibility for the mixture.
std::vector<int> transfer_eval_fixed_centroids(const KMeansResult& source, const Matrix& target);
std::vector<int> transfer_eval_fixed_centroids(const GmmResult& source, const Matrix& target);

}  // namespace tdcm
