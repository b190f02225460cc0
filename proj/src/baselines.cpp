#include "tdcm/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "tdcm/error.hpp"

namespace tdcm {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
  return Eigen::Map<const RowMajor>(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                                    static_cast<Eigen::Index>(m.cols()));
}

void check_k(const Matrix& z, std::size_t k, const Matrix& init, const char* op) {
  if (k == 0) throw ConfigError(std::string(op) + ": K must be positive");
  if (k > z.rows()) {
    throw ConfigError(std::string(op) + ": K=" + std::to_string(k) + " exceeds N=" +
                      std::to_string(z.rows()));
  }
  if (init.rows() != k || init.cols() != z.cols()) {
    throw ShapeError(std::string(op) + ": initial centroids " + init.shape_string() +
                     " do not match K=" + std::to_string(k) + ", b=" + std::to_string(z.cols()));
  }
  if (!init.all_finite()) throw ParameterError(std::string(op) + ": initial centroids not finite");
}

Matrix hard_means(const Matrix& z, const std::vector<int>& labels, const Matrix& previous) {
  const std::size_t k = previous.rows();
  Matrix sums(k, z.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto j = static_cast<std::size_t>(labels[i]);
    ++counts[j];
    auto s = sums.row(j);
    auto zi = z.row(i);
    for (std::size_t d = 0; d < z.cols(); ++d) s[d] += zi[d];
  }
  Matrix out = previous;
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0) continue;
    for (std::size_t d = 0; d < z.cols(); ++d) {
      out(j, d) = sums(j, d) / static_cast<double>(counts[j]);
    }
  }
  return out;
}

struct CholeskyFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

CholeskyFactor factor(const Matrix& covariance, const char* op, std::size_t iteration) {
  require_square(covariance, op);
  Eigen::MatrixXd c = view(covariance);
  if (!c.isApprox(c.transpose(), 1e-12)) {
    throw NumericalError(std::string(op) + ": covariance is not symmetric at iteration " +
                         std::to_string(iteration));
  }
  CholeskyFactor f{Eigen::LLT<Eigen::MatrixXd>(c), 0.0};
  if (f.llt.info() != Eigen::Success) {
    throw NumericalError(std::string(op) + ": covariance lost positive-definiteness at iteration " +
                         std::to_string(iteration));
  }
  const Eigen::MatrixXd l = f.llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) {
      throw NumericalError(std::string(op) +
                           ": covariance lost positive-definiteness at iteration " +
                           std::to_string(iteration));
    }
    f.log_det += 2.0 * std::log(l(i, i));
  }
  return f;
}

// Squared Mahalanobis distances, N x K.
Matrix mahalanobis(const Matrix& z, const Matrix& means, const CholeskyFactor& f) {
  const std::size_t b = z.cols();
  Matrix out(z.rows(), means.rows());
  Eigen::VectorXd p(static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < means.rows(); ++j) {
      for (std::size_t d = 0; d < b; ++d) p(static_cast<Eigen::Index>(d)) = z(i, d) - means(j, d);
      const Eigen::VectorXd y = f.llt.matrixL().solve(p);
      out(i, j) = y.squaredNorm();
    }
  }
  return out;
}

struct EStep {
  Matrix responsibilities;
  double log_likelihood = 0.0;
};

EStep e_step(const Matrix& z, const Matrix& means, const CholeskyFactor& f) {
  const Matrix m = mahalanobis(z, means, f);
  const std::size_t k = means.rows();
  const double b = static_cast<double>(z.cols());
  const double log_norm =
      -0.5 * (b * std::log(2.0 * std::numbers::pi) + f.log_det) - std::log(static_cast<double>(k));
  EStep out{Matrix(z.rows(), k), 0.0};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) peak = std::max(peak, -0.5 * m(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out.responsibilities(i, j) = std::exp(-0.5 * m(i, j) - peak);
      total += out.responsibilities(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) out.responsibilities(i, j) /= total;
    out.log_likelihood += log_norm + peak + std::log(total);
  }
  return out;
}

}  // namespace

std::vector<int> nearest_centroid_labels(const Matrix& z, const Matrix& centroids) {
  if (z.cols() != centroids.cols()) {
    throw ShapeError("nearest_centroid_labels: dimension mismatch");
  }
  std::vector<int> labels(z.rows(), 0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
      const double d = squared_distance(z.row(i), centroids.row(j));
      if (d < best) {
        best = d;
        labels[i] = static_cast<int>(j);
      }
    }
  }
  return labels;
}

double inertia(const Matrix& z, const Matrix& centroids, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    total += squared_distance(z.row(i), centroids.row(static_cast<std::size_t>(labels[i])));
  }
  return total;
}

KMeansResult kmeans_lloyd(const Matrix& z, std::size_t k, const Matrix& init, std::size_t max_iter,
                          double tol) {
  check_k(z, k, init, "kmeans_lloyd");
  KMeansResult result;
  result.centroids = init;
  for (std::size_t it = 0; it < max_iter; ++it) {
    result.labels = nearest_centroid_labels(z, result.centroids);
    result.inertia_history.push_back(inertia(z, result.centroids, result.labels));
    Matrix next = hard_means(z, result.labels, result.centroids);
    const double shift = max_abs_diff(next, result.centroids);
    result.centroids = std::move(next);
    result.iterations = it + 1;
    if (shift < tol) break;
  }
  result.labels = nearest_centroid_labels(z, result.centroids);
  result.inertia = inertia(z, result.centroids, result.labels);
  result.inertia_history.push_back(result.inertia);
  return result;
}

Matrix kmeans_plus_plus_init(const Matrix& z, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > z.rows()) throw ConfigError("kmeans++: need 1 <= K <= N");
  std::mt19937_64 rng(seed);
  Matrix centers(k, z.cols());
  std::uniform_int_distribution<std::size_t> first(0, z.rows() - 1);
  const std::size_t i0 = first(rng);
  std::copy(z.row(i0).begin(), z.row(i0).end(), centers.row(0).begin());
  std::vector<double> d2(z.rows(), std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(z.row(i), centers.row(c - 1)));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick + 1 < z.rows(); ++pick) {
        target -= d2[pick];
        if (target <= 0.0) break;
      }
    }
    std::copy(z.row(pick).begin(), z.row(pick).end(), centers.row(c).begin());
  }
  return centers;
}

SoftKMeansStep soft_kmeans_step(const Matrix& z, const Matrix& centroids, double tau) {
  if (!(tau > 0.0)) throw ParameterError("soft_kmeans_step: tau must be positive");
  if (z.cols() != centroids.cols()) throw ShapeError("soft_kmeans_step: dimension mismatch");
  Matrix neg_dist(z.rows(), centroids.rows());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < centroids.rows(); ++j)
      neg_dist(i, j) = -squared_distance(z.row(i), centroids.row(j));
  SoftKMeansStep step;
  step.delta = softmax_rows(neg_dist, tau);
  const std::size_t k = centroids.rows();
  step.centroids = centroids;
  for (std::size_t j = 0; j < k; ++j) {
    double mass = 0.0;
    std::vector<double> acc(z.cols(), 0.0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      mass += step.delta(i, j);
      for (std::size_t d = 0; d < z.cols(); ++d) acc[d] += step.delta(i, j) * z(i, d);
    }
    if (mass < kEmptyClusterMass) continue;
    for (std::size_t d = 0; d < z.cols(); ++d) step.centroids(j, d) = acc[d] / mass;
  }
  return step;
}

Matrix gmm_responsibilities(const Matrix& z, const Matrix& means, const Matrix& covariance) {
  if (z.cols() != means.cols()) throw ShapeError("gmm_responsibilities: dimension mismatch");
  return e_step(z, means, factor(covariance, "gmm_responsibilities", 0)).responsibilities;
}

double gmm_log_likelihood(const Matrix& z, const Matrix& means, const Matrix& covariance) {
  if (z.cols() != means.cols()) throw ShapeError("gmm_log_likelihood: dimension mismatch");
  return e_step(z, means, factor(covariance, "gmm_log_likelihood", 0)).log_likelihood;
}

GmmResult gmm_em_shared(const Matrix& z, std::size_t k, const Matrix& init_means,
                        const Matrix& shared_cov_init, const GmmOptions& options) {
  check_k(z, k, init_means, "gmm_em_shared");
  if (shared_cov_init.rows() != z.cols() || shared_cov_init.cols() != z.cols()) {
    throw ShapeError("gmm_em_shared: covariance must be b x b");
  }
  GmmResult result;
  result.means = init_means;
  result.shared_covariance = shared_cov_init;
  result.weights.assign(k, 1.0 / static_cast<double>(k));
  const std::size_t b = z.cols();
  const double n = static_cast<double>(z.rows());

  for (std::size_t it = 0; it < options.max_iter; ++it) {
    const CholeskyFactor f = factor(result.shared_covariance, "gmm_em_shared", it);
    EStep e = e_step(z, result.means, f);
    result.log_likelihood_history.push_back(e.log_likelihood);

    // M-step: weights stay uniform.
    Matrix means = result.means;
    for (std::size_t j = 0; j < k; ++j) {
      double mass = 0.0;
      std::vector<double> acc(b, 0.0);
      for (std::size_t i = 0; i < z.rows(); ++i) {
        mass += e.responsibilities(i, j);
        for (std::size_t d = 0; d < b; ++d) acc[d] += e.responsibilities(i, j) * z(i, d);
      }
      if (mass < kEmptyClusterMass) continue;
      for (std::size_t d = 0; d < b; ++d) means(j, d) = acc[d] / mass;
    }
    if (options.update_covariance) {
      Matrix cov(b, b);
      for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const double r = e.responsibilities(i, j);
          if (r == 0.0) continue;
          for (std::size_t a = 0; a < b; ++a) {
            const double pa = z(i, a) - means(j, a);
            for (std::size_t c = 0; c < b; ++c) cov(a, c) += r * pa * (z(i, c) - means(j, c));
          }
        }
      }
      for (std::size_t a = 0; a < b; ++a) {
        for (std::size_t c = 0; c < b; ++c) cov(a, c) /= n;
        cov(a, a) += options.covariance_floor;
      }
      result.shared_covariance = symmetrize(cov);
    }
    const double shift = max_abs_diff(means, result.means);
    result.means = std::move(means);
    result.iterations = it + 1;
    if (shift < options.tol) break;
  }
  const CholeskyFactor f = factor(result.shared_covariance, "gmm_em_shared", result.iterations);
  EStep final_step = e_step(z, result.means, f);
  result.responsibilities = std::move(final_step.responsibilities);
  result.log_likelihood = final_step.log_likelihood;
  result.log_likelihood_history.push_back(result.log_likelihood);
  return result;
}

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::KMeans: return "kmeans";
    case BaselineKind::Gmm: return "gmm";
    case BaselineKind::SoftKMeans: return "soft-kmeans";
  }
  return "kmeans";
}

BaselineKind parse_baseline(const std::string& name) {
  if (name == "kmeans") return BaselineKind::KMeans;
  if (name == "gmm") return BaselineKind::Gmm;
  if (name == "soft-kmeans" || name == "soft_kmeans") return BaselineKind::SoftKMeans;
  throw ConfigError("unknown baseline '" + name + "' (valid: kmeans, gmm, soft-kmeans)");
}

std::vector<int> transfer_eval_fixed_centroids(const KMeansResult& source, const Matrix& target) {
  return nearest_centroid_labels(target, source.centroids);
}

std::vector<int> transfer_eval_fixed_centroids(const GmmResult& source, const Matrix& target) {
  return argmax_rows(gmm_responsibilities(target, source.means, source.shared_covariance));
}

}  // namespace tdcm
