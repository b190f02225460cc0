#include "tdcm/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tdcm/error.hpp"

namespace tdcm {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Shape: return "shape error";
    case ErrorCode::Parameter: return "parameter error";
    case ErrorCode::Configuration: return "configuration error";
    case ErrorCode::Domain: return "domain error";
    case ErrorCode::State: return "state error";
    case ErrorCode::Evaluation: return "evaluation error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Persistence: return "persistence error";
    case ErrorCode::Numerical: return "numerical error";
    case ErrorCode::Io: return "io error";
  }
  return "unknown error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream os;
    os << "matrix data length " << data_.size() << " does not match " << rows_ << "x" << cols_;
    throw ShapeError(os.str());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_square(const Matrix& m, const char* op) {
  if (m.rows() != m.cols()) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " + m.shape_string());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + a.shape_string() + " * " +
                     b.shape_string() + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: column counts differ (" + a.shape_string() + " * " +
                     b.shape_string() + "^T)");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  auto o = out.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= y[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= y[i];
  return out;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

double frobenius_sq(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  for (double& v : mean) v /= static_cast<double>(std::max<std::size_t>(m.rows(), 1));
  return mean;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw ShapeError("select_rows: row index out of range");
    std::copy(m.row(indices[i]).begin(), m.row(indices[i]).end(), out.row(i).begin());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

ActivationKind ActivationKind::leaky_relu(double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ParameterError("LeakyReLU slope must lie in (0, 1), got " + std::to_string(slope));
  }
  return {Type::LeakyReLU, slope};
}

std::string ActivationKind::name() const {
  switch (type) {
    case Type::Identity: return "identity";
    case Type::ReLU: return "relu";
    case Type::LeakyReLU: return "leaky_relu";
  }
  return "relu";
}

ActivationKind ActivationKind::parse(const std::string& name, double slope) {
  if (name == "identity") return identity();
  if (name == "relu") return relu();
  if (name == "leaky_relu" || name == "leakyrelu") return leaky_relu(slope);
  throw ConfigError("unknown activation '" + name + "' (expected identity, relu, leaky_relu)");
}

double apply_activation(const ActivationKind& kind, double x) noexcept {
  switch (kind.type) {
    case ActivationKind::Type::Identity: return x;
    case ActivationKind::Type::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::Type::LeakyReLU: return x >= 0.0 ? x : kind.slope * x;
  }
  return x;
}

double activation_derivative(const ActivationKind& kind, double x) noexcept {
  switch (kind.type) {
    case ActivationKind::Type::Identity: return 1.0;
    case ActivationKind::Type::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Type::LeakyReLU: return x > 0.0 ? 1.0 : kind.slope;
  }
  return 1.0;
}

Matrix softmax_rows(const Matrix& scores, double tau) {
  if (!(tau > 0.0)) throw ParameterError("softmax_rows: tau must be positive");
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto in = scores.row(r);
    auto dst = out.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp((in[c] - peak) / tau);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Matrix symmetrize(const Matrix& raw) {
  require_square(raw, "symmetrize");
  const std::size_t n = raw.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (raw(i, j) + raw(j, i)) / 2.0;
  return out;
}

Matrix standardize_columns(const Matrix& x, double eps) {
  if (!(eps > 0.0)) throw ParameterError("standardize_columns: eps must be positive");
  if (x.rows() == 0) return x;
  const double n = static_cast<double>(x.rows());
  Matrix out = x;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    const double s = std::sqrt(var / n + eps);
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, c) = (x(r, c) - mean) / s;
  }
  return out;
}

Matrix random_orthonormal_rows(std::size_t k, std::size_t b, std::uint64_t seed) {
  if (k > b) {
    throw ParameterError("random_orthonormal_rows: cannot fit K=" + std::to_string(k) +
                         " orthonormal rows in dimension b=" + std::to_string(b));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix out(k, b);
  for (std::size_t i = 0; i < k; ++i) {
    auto row = out.row(i);
    for (;;) {
      for (double& v : row) v = gauss(rng);
      // Two passes of modified Gram-Schmidt keep the rows orthogonal to ~1e-15.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < i; ++j) {
          const double proj = dot(row, out.row(j));
          auto prev = out.row(j);
          for (std::size_t c = 0; c < b; ++c) row[c] -= proj * prev[c];
        }
      }
      const double norm = std::sqrt(dot(row, row));
      if (norm > 1e-6) {
        for (double& v : row) v /= norm;
        break;
      }
    }
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> labels(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    labels[r] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace tdcm

namespace tdcm {

Matrix pairwise_bilinear_forms(const Matrix& z, const Matrix& c, const Matrix& wq,
                               const Matrix& wk) {
  const std::size_t b = z.cols();
  if (c.cols() != b || wq.rows() != b || wq.cols() != b || wk.rows() != b || wk.cols() != b) {
    throw ShapeError("pairwise_bilinear_forms: dimensions do not match (Z " + z.shape_string() +
                     ", C " + c.shape_string() + ", W_Q " + wq.shape_string() + ", W_K " +
                     wk.shape_string() + ")");
  }
  Matrix out(z.rows(), c.rows());
  std::vector<double> p(b), u(b), v(b);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zi = z.row(i);
    for (std::size_t j = 0; j < c.rows(); ++j) {
      auto cj = c.row(j);
      for (std::size_t d = 0; d < b; ++d) p[d] = zi[d] - cj[d];
      for (std::size_t r = 0; r < b; ++r) {
        u[r] = dot(wq.row(r), p);
        v[r] = dot(wk.row(r), p);
      }
      out(i, j) = dot(u, v);
    }
  }
  return out;
}

Matrix weighted_centroids(const Matrix& z, const Matrix& delta, const Matrix& previous,
                          bool global_normalization) {
  if (delta.rows() != z.rows() || previous.rows() != delta.cols() ||
      previous.cols() != z.cols()) {
    throw ShapeError("weighted_centroids: Z " + z.shape_string() + ", delta " +
                     delta.shape_string() + ", previous " + previous.shape_string());
  }
  const std::size_t k = delta.cols();
  const std::size_t b = z.cols();
  Matrix sums(k, b);
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zi = z.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      const double w = delta(i, j);
      mass[j] += w;
      auto s = sums.row(j);
      for (std::size_t d = 0; d < b; ++d) s[d] += w * zi[d];
    }
  }
  Matrix out = previous;
  if (global_normalization) {
    double total = 0.0;
    for (double m : mass) total += m;
    if (total < kEmptyClusterMass) return out;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t d = 0; d < b; ++d) out(j, d) = sums(j, d) / total;
    return out;
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (mass[j] < kEmptyClusterMass) continue;
    for (std::size_t d = 0; d < b; ++d) out(j, d) = sums(j, d) / mass[j];
  }
  return out;
}

}  // namespace tdcm
