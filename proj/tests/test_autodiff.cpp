#include <cmath>
#include <random>

#include "doctest.h"
#include "tdcm/autodiff.hpp"
#include "tdcm/error.hpp"
#include "tdcm/model.hpp"
#include "tdcm/objectives.hpp"

using namespace tdcm;
namespace ad = tdcm::ad;

namespace {

Matrix scalar(double v) { return Matrix(1, 1, v); }

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("scalar forward and backward") {
  ad::Tape tape;
  ad::Var x = tape.variable(scalar(3.0));
  ad::Var f = ad::square(x);
  CHECK(f.scalar() == 9.0);
  tape.backward(f);
  CHECK(tape.gradient(x)(0, 0) == 6.0);

  ad::Tape t2;
  ad::Var z = t2.variable(scalar(0.0));
  CHECK(ad::exp(z).scalar() == 1.0);
}

TEST_CASE("product rule and constant inputs") {
  ad::Tape tape;
  ad::Var x = tape.variable(scalar(2.0));
  ad::Var y = tape.variable(scalar(5.0));
  ad::Var unused = tape.variable(scalar(1.0));
  ad::Var f = ad::mul(x, y);
  tape.backward(f);
  CHECK(tape.gradient(x)(0, 0) == 5.0);
  CHECK(tape.gradient(y)(0, 0) == 2.0);
  CHECK(tape.gradient(unused)(0, 0) == 0.0);
}

TEST_CASE("domain errors carry the node index") {
  ad::Tape tape;
  ad::Var x = tape.variable(scalar(-1.0));
  CHECK_THROWS_AS(ad::log(x), DomainError);
  ad::Var zero = tape.constant(scalar(0.0));
  CHECK_THROWS_AS(ad::div(x, zero), DomainError);
}

TEST_CASE("backward on a foreign or empty tape is a state error") {
  ad::Tape a;
  ad::Tape b;
  ad::Var x = a.variable(scalar(1.0));
  CHECK_THROWS_AS(b.backward(x), StateError);
}

TEST_CASE("finite differences are exact for a quadratic") {
  std::mt19937_64 rng(1);
  const Matrix a = gaussian(3, 3, rng);
  ad::LossBuilder build = [&](ad::Tape& tape, std::span<const ad::Var> p) {
    ad::Var ax = ad::matmul(tape.constant(a), p[0]);
    return ad::sum(ad::square(ax));
  };
  const auto report = ad::finite_diff_check(build, {gaussian(3, 2, rng)});
  CHECK(report.checked == 6);
  CHECK(report.max_relative_error <= 1e-9);
}

TEST_CASE("a parameter the loss ignores has zero gradient and zero error") {
  ad::LossBuilder build = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(ad::square(p[0])); };
  std::mt19937_64 rng(2);
  auto rec = ad::forward(build, {gaussian(2, 2, rng), gaussian(2, 2, rng)});
  const auto grads = ad::backward(rec);
  CHECK(max_abs(grads.gradients[1]) == 0.0);
  const auto report = ad::finite_diff_check(build, {gaussian(2, 2, rng), gaussian(2, 2, rng)});
  CHECK(report.max_relative_error <= 1e-9);
}

TEST_CASE("each differentiable op passes a finite-difference check") {
  std::mt19937_64 rng(11);
  const Matrix prev = gaussian(3, 4, rng);
  std::vector<std::pair<const char*, ad::LossBuilder>> cases = {
      {"symmetrize", [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(ad::square(ad::symmetrize(p[0]))); }},
      {"softmax_rows",
       [](ad::Tape&, std::span<const ad::Var> p) {
         return ad::sum(ad::mul(ad::softmax_rows(p[0], 0.7), p[0]));
       }},
      {"pairwise_bilinear",
       [](ad::Tape&, std::span<const ad::Var> p) {
         return ad::sum(ad::pairwise_bilinear(ad::matmul_bt(p[0], p[0]), p[0], p[0], p[0]));
       }},
      {"standardize_columns",
       [](ad::Tape& t, std::span<const ad::Var> p) {
         Matrix w(5, 4);
         for (std::size_t i = 0; i < w.size(); ++i) w.values()[i] = std::sin(1.0 + static_cast<double>(i));
         return ad::sum(ad::mul(ad::standardize_columns(p[1], 1e-5), t.constant(w)));
       }},
      {"xlogx", [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(ad::xlogx(ad::exp(p[0]))); }},
      {"centroid_update",
       [prev](ad::Tape& t, std::span<const ad::Var> p) {
         ad::Var d = ad::softmax_rows(ad::matmul_bt(p[1], t.constant(prev)), 1.0);
         return ad::sum(ad::square(ad::centroid_update(p[1], d, t.constant(prev), false)));
       }},
  };
  for (auto& [name, build] : cases) {
    INFO(name);
    const auto report = ad::finite_diff_check(build, {gaussian(4, 4, rng), gaussian(5, 4, rng)});
    CHECK(report.max_relative_error <= 1e-6);
  }
}

TEST_CASE("taped TDCM loss matches the untaped evaluation") {
  std::mt19937_64 rng(5);
  const Matrix z = gaussian(4, 2, rng);
  ScoreParams sp = ScoreParams::identity(2, ActivationKind::relu(), 1.0);
  sp.wq_raw = add(Matrix::identity(2), gaussian(2, 2, rng, 0.1));
  sp.wk_raw = add(Matrix::identity(2), gaussian(2, 2, rng, 0.1));
  BlockStackConfig cfg{1, 2, 2, CentroidInit::Identity, false};
  const LossWeights w = LossWeights::defaults(1);

  const StackTrace trace = run_stack(z, cfg, sp, 0);
  const LossBreakdown plain = total_loss(trace, z, sp, w);

  ad::Tape tape;
  ad::Var zv = tape.variable(z);
  auto [wq, wk] = taped::effective_weights(tape, tape.variable(sp.wq_raw), tape.variable(sp.wk_raw), sp);
  const auto nodes = taped::run_stack(tape, zv, wq, wk, init_centroids(cfg, 0).centroids, cfg, sp);
  const auto loss = taped::total_loss(tape, nodes, w);
  CHECK(loss.total.scalar() == plain.total);
  CHECK(loss.clustering.scalar() == plain.clustering);
  CHECK(loss.entropy.scalar() == plain.entropy);
  CHECK(loss.orthogonality.scalar() == plain.orthogonality);
}

TEST_CASE("full TDCM loss gradient, 4 samples, b=3, K=2, L=2") {
  std::mt19937_64 rng(8);
  const Matrix z = gaussian(4, 3, rng);
  ScoreParams settings = ScoreParams::identity(3, ActivationKind::relu(), 1.0);
  BlockStackConfig cfg{2, 3, 2, CentroidInit::Identity, false};
  const Matrix c0 = init_centroids(cfg, 0).centroids;
  const LossWeights w = LossWeights::defaults(2);
  ad::LossBuilder build = [&](ad::Tape& tape, std::span<const ad::Var> p) {
    auto [wq, wk] = taped::effective_weights(tape, p[1], p[2], settings);
    return taped::total_loss(tape, taped::run_stack(tape, p[0], wq, wk, c0, cfg, settings), w).total;
  };
  const auto report = ad::finite_diff_check(
      build, {z, add(Matrix::identity(3), gaussian(3, 3, rng, 0.2)), add(Matrix::identity(3), gaussian(3, 3, rng, 0.2))});
  CHECK(report.checked > 0);
  CHECK(report.max_relative_error <= 1e-5);
}

}  // TEST_SUITE
