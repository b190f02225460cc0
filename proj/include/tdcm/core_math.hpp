#pragma once

// Dense row-major matrices and the handful of kernels shared by the model,
// the objectives and the classical baselines.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tdcm {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  Matrix transpose() const;
  bool all_finite() const noexcept;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Shape checks throw ShapeError naming the operation.
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);
void require_square(const Matrix& m, const char* op);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T without materialising the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);
double frobenius_sq(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
std::vector<double> column_means(const Matrix& m);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices);
double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

struct ActivationKind {
  enum class Type { Identity, ReLU, LeakyReLU };
  Type type = Type::ReLU;
  double slope = 0.01;

  static ActivationKind identity() { return {Type::Identity, 0.0}; }
  static ActivationKind relu() { return {Type::ReLU, 0.0}; }
  // slope must lie in (0, 1).
  static ActivationKind leaky_relu(double slope);

  std::string name() const;
  static ActivationKind parse(const std::string& name, double slope = 0.01);
  friend bool operator==(const ActivationKind&, const ActivationKind&) = default;
};

double apply_activation(const ActivationKind& kind, double x) noexcept;
// Derivative with the convention d/dx ReLU(0) = 0 (LeakyReLU(0) likewise uses the slope).
double activation_derivative(const ActivationKind& kind, double x) noexcept;

// Row-wise softmax of scores / tau with per-row max subtraction.
Matrix softmax_rows(const Matrix& scores, double tau);

// (raw + raw^T) / 2
Matrix symmetrize(const Matrix& raw);

// Per-column (x - mean) / sqrt(var + eps) with the biased variance.
Matrix standardize_columns(const Matrix& x, double eps);

// k mutually orthonormal rows in R^b from Gram-Schmidt on seeded Gaussian draws.
Matrix random_orthonormal_rows(std::size_t k, std::size_t b, std::uint64_t seed);

// Index of the largest entry in each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Matrix& m);

}  // namespace tdcm

namespace tdcm {

// Fused kernels shared by the taped and untaped model paths.

// q(i, j) = (W_Q p) . (W_K p) with p = z_i - c_j.
Matrix pairwise_bilinear_forms(const Matrix& z, const Matrix& c, const Matrix& wq,
                               const Matrix& wk);

// Responsibility-weighted means. Per-cluster normalisation divides by the
// column mass sum_i delta(i, j); global normalisation divides every row by
// sum_ij delta(i, j). A cluster (or, globally, the whole update) whose mass is
// below kEmptyClusterMass keeps its previous centroid.
inline constexpr double kEmptyClusterMass = 1e-12;
Matrix weighted_centroids(const Matrix& z, const Matrix& delta, const Matrix& previous,
                          bool global_normalization);

}  // namespace tdcm
