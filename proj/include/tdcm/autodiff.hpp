#pragma once

// Reverse-mode differentiation over a tape of matrix-valued nodes.
//
// Nodes are appended in evaluation order, so every parent index is smaller
// than its child's index and a single reverse sweep accumulates gradients.
// Forward values are produced by the same kernels the untaped code paths use,
// which makes taped and untaped evaluation agree bit for bit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tdcm/core_math.hpp"

namespace tdcm::ad {

enum class OpKind : std::uint8_t {
  Variable,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  Neg,
  Exp,
  Log,
  Square,
  XLogX,
  Maximum,
  Activation,
  MatMul,
  MatMulBT,
  Transpose,
  AddRowBroadcast,
  Sum,
  ColumnSum,
  Symmetrize,
  PairwiseBilinear,
  SoftmaxRows,
  CentroidUpdate,
  StandardizeColumns,
};

const char* op_name(OpKind kind) noexcept;

class Tape;

class Var {
 public:
  Var() = default;
  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t index() const noexcept { return index_; }
  const Matrix& value() const;
  // Value of a 1x1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);
  Var constant(Matrix value);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t index) const { return nodes_.at(index).kind; }
  std::span<const std::size_t> parents(std::size_t index) const { return nodes_.at(index).parents; }
  const Matrix& value(std::size_t index) const { return nodes_.at(index).value; }

  // Reverse accumulation from a 1x1 loss node. Throws StateError if the
  // loss does not belong to this tape or the tape is empty.
  void backward(Var loss);
  bool has_gradients() const noexcept { return backward_done_; }
  const Matrix& gradient(Var v) const;

  // One byte per activation input entry (1 when strictly positive). Two
  // evaluations with different patterns straddle a kink.
  std::vector<std::uint8_t> activation_pattern() const;

  // Used by op implementations.
  Var push(OpKind kind, Matrix value, std::vector<std::size_t> parents, Backprop backprop);
  Matrix& grad_slot(std::size_t index);
  const Matrix& upstream(std::size_t index) const { return grads_[index]; }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> parents;
    Matrix value;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
  mutable std::vector<Matrix> grads_;
  std::vector<std::size_t> activation_nodes_;
  bool backward_done_ = false;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// Throws DomainError (with the node index) on a zero divisor.
Var div(Var a, Var b);
Var scale(Var a, double s);
Var neg(Var a);
Var exp(Var a);
// Throws DomainError (with the node index) on non-positive input.
Var log(Var a);
Var square(Var a);
// x log x with 0 log 0 = 0; negative input is a DomainError.
Var xlogx(Var a);
Var maximum(Var a, Var b);
Var activate(Var a, const ActivationKind& kind);
Var matmul(Var a, Var b);
Var matmul_bt(Var a, Var b);
Var transpose(Var a);
// Adds the 1 x cols row vector `bias` to every row of `a`.
Var add_row(Var a, Var bias);
Var sum(Var a);
Var column_sum(Var a);
Var symmetrize(Var a);
Var pairwise_bilinear(Var z, Var c, Var wq, Var wk);
Var softmax_rows(Var scores, double tau);
Var centroid_update(Var z, Var delta, Var previous, bool global_normalization);
Var standardize_columns(Var x, double eps);

struct GradientReport {
  std::vector<Matrix> gradients;
  double max_abs_gradient = 0.0;
};

// Builds the loss on `tape` from variables wrapping `params` (in order).
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct Recording {
  std::unique_ptr<Tape> tape;
  std::vector<Var> params;
  Var loss;
  double value() const { return loss.scalar(); }
};

Recording forward(const LossBuilder& build, const std::vector<Matrix>& params);
GradientReport backward(Recording& recording);

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +h and -h evaluations straddle an activation kink.
  std::size_t skipped = 0;
};

// Central differences on every parameter coordinate, compared against the
// reverse-mode gradient with denominator max(|analytic|, |numeric|, 1e-8).
FiniteDiffReport finite_diff_check(const LossBuilder& build, const std::vector<Matrix>& params,
                                   double h = 1e-6);

}  // namespace tdcm::ad
