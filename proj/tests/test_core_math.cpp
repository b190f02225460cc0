#include <cmath>
#include <random>

#include "doctest.h"
#include "tdcm/core_math.hpp"
#include "tdcm/error.hpp"

using namespace tdcm;

TEST_SUITE("core_math") {

TEST_CASE("softmax_rows closed forms") {
  const Matrix uniform = softmax_rows(Matrix::from_rows({{0.0, 0.0}}), 1.0);
  CHECK(uniform(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(uniform(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  const Matrix third = softmax_rows(Matrix::from_rows({{0.0, std::log(3.0)}}), 1.0);
  CHECK(std::abs(third(0, 0) - 0.25) < 1e-15);
  CHECK(std::abs(third(0, 1) - 0.75) < 1e-15);

  const Matrix sharp = softmax_rows(Matrix::from_rows({{0.0, -50.0}}), 0.01);
  CHECK(std::abs(sharp(0, 0) - 1.0) < 1e-12);
  CHECK(sharp(0, 1) < 1e-12);
}

TEST_CASE("softmax_rows is row-stochastic and stable for huge scores") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 200.0);
  Matrix s(30, 5);
  for (double& v : s.values()) v = n(rng);
  for (double tau : {1e-3, 0.1, 1.0, 10.0}) {
    const Matrix p = softmax_rows(s, tau);
    REQUIRE(p.all_finite());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double total = 0.0;
      for (double v : p.row(r)) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax_rows rejects a non-positive temperature") {
  CHECK_THROWS_AS(softmax_rows(Matrix(1, 2), 0.0), ParameterError);
  CHECK_THROWS_AS(softmax_rows(Matrix(1, 2), -1.0), ParameterError);
}

TEST_CASE("symmetrize") {
  CHECK(symmetrize(Matrix::from_rows({{1, 2}, {3, 4}})) == Matrix::from_rows({{1, 2.5}, {2.5, 4}}));
  const Matrix sym = Matrix::from_rows({{2, -1, 0}, {-1, 3, 5}, {0, 5, 1}});
  CHECK(symmetrize(sym) == sym);
  CHECK(symmetrize(Matrix::from_rows({{0, 2}, {-2, 0}})) == Matrix(2, 2));
  CHECK_THROWS_AS(symmetrize(Matrix(2, 3)), ShapeError);
}

TEST_CASE("activations") {
  CHECK(apply_activation(ActivationKind::relu(), 0.0) == 0.0);
  CHECK(apply_activation(ActivationKind::relu(), -3.0) == 0.0);
  CHECK(apply_activation(ActivationKind::relu(), 2.5) == 2.5);
  CHECK(apply_activation(ActivationKind::leaky_relu(0.1), -3.0) == doctest::Approx(-0.3));
  CHECK(apply_activation(ActivationKind::identity(), -3.0) == -3.0);
  CHECK(activation_derivative(ActivationKind::relu(), 0.0) == 0.0);
  CHECK(activation_derivative(ActivationKind::leaky_relu(0.2), -1.0) == 0.2);
  CHECK_THROWS_AS(ActivationKind::leaky_relu(1.5), ParameterError);
  CHECK_THROWS_AS(ActivationKind::parse("tanh"), ConfigError);
}

TEST_CASE("random_orthonormal_rows") {
  auto gram_is_identity = [](const Matrix& m) {
    const Matrix g = matmul_bt(m, m);
    return max_abs_diff(g, Matrix::identity(m.rows())) < 1e-10;
  };
  for (std::uint64_t seed : {0u, 1u, 99u}) CHECK(gram_is_identity(random_orthonormal_rows(4, 4, seed)));
  const Matrix r = random_orthonormal_rows(2, 3, 5);
  CHECK(r.rows() == 2);
  CHECK(r.cols() == 3);
  CHECK(gram_is_identity(r));
  CHECK(random_orthonormal_rows(3, 6, 11) == random_orthonormal_rows(3, 6, 11));
  CHECK_THROWS_AS(random_orthonormal_rows(4, 3, 0), ParameterError);
}

TEST_CASE("matmul and matmul_bt agree with the transpose") {
  const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  const Matrix b = Matrix::from_rows({{1, 0, -1}, {2, 1, 0}});
  CHECK(matmul_bt(a, b) == matmul(a, b.transpose()));
  CHECK(matmul(a, b.transpose()) == Matrix::from_rows({{-2, 4}, {-2, 13}}));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("standardize_columns gives zero mean and unit biased variance") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(4.0, 3.0);
  Matrix x(50, 3);
  for (double& v : x.values()) v = n(rng);
  const Matrix y = standardize_columns(x, 1e-12);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < 50; ++r) mean += y(r, c);
    mean /= 50.0;
    for (std::size_t r = 0; r < 50; ++r) sq += (y(r, c) - mean) * (y(r, c) - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sq / 50.0 - 1.0) < 1e-9);
  }
  CHECK(standardize_columns(Matrix(4, 2, 7.0), 1e-5) == Matrix(4, 2));
  CHECK_THROWS_AS(standardize_columns(x, 0.0), ParameterError);
}

TEST_CASE("weighted_centroids arithmetic") {
  const Matrix z = Matrix::from_rows({{0, 0}, {1, 0}, {10, 0}});
  const Matrix delta = Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}});
  const Matrix c = weighted_centroids(z, delta, Matrix(2, 2), false);
  CHECK(std::abs(c(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(c(1, 0) - 9.2 / 1.2) < 1e-12);
  CHECK(c(0, 1) == 0.0);
  CHECK(c(1, 1) == 0.0);
}

TEST_CASE("weighted_centroids keeps an empty cluster in place") {
  const Matrix z = Matrix::from_rows({{1, 1}, {3, 3}});
  const Matrix delta = Matrix::from_rows({{1, 0}, {1, 0}});
  const Matrix prev = Matrix::from_rows({{0, 0}, {-5, 7}});
  const Matrix c = weighted_centroids(z, delta, prev, false);
  CHECK(c == Matrix::from_rows({{2, 2}, {-5, 7}}));
}

TEST_CASE("argmax_rows breaks ties toward the lowest index") {
  const auto labels = argmax_rows(Matrix::from_rows({{0.5, 0.5}, {0.1, 0.9}, {0.3, 0.3}}));
  CHECK(labels == std::vector<int>{0, 1, 0});
}

}  // TEST_SUITE
