#include "tdcm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdcm/error.hpp"

namespace tdcm::ad {

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::Variable: return "variable";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::Neg: return "neg";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::XLogX: return "xlogx";
    case OpKind::Maximum: return "maximum";
    case OpKind::Activation: return "activation";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulBT: return "matmul_bt";
    case OpKind::Transpose: return "transpose";
    case OpKind::AddRowBroadcast: return "add_row";
    case OpKind::Sum: return "sum";
    case OpKind::ColumnSum: return "column_sum";
    case OpKind::Symmetrize: return "symmetrize";
    case OpKind::PairwiseBilinear: return "pairwise_bilinear";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::CentroidUpdate: return "centroid_update";
    case OpKind::StandardizeColumns: return "standardize_columns";
  }
  return "unknown";
}

Tape& Var::tape() const {
  if (tape_ == nullptr) throw StateError("variable is not attached to a tape");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(index_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node holds a " + v.shape_string() + " matrix");
  return v(0, 0);
}

Var Tape::variable(Matrix value) { return push(OpKind::Variable, std::move(value), {}, nullptr); }

Var Tape::constant(Matrix value) { return push(OpKind::Constant, std::move(value), {}, nullptr); }

Var Tape::push(OpKind kind, Matrix value, std::vector<std::size_t> parents, Backprop backprop) {
  if (backward_done_) throw StateError("cannot extend a tape after backward()");
  const std::size_t index = nodes_.size();
  for (std::size_t p : parents) {
    if (p >= index) throw StateError("tape parent index out of order");
  }
  if (kind == OpKind::Activation) activation_nodes_.push_back(index);
  nodes_.push_back(Node{kind, std::move(parents), std::move(value), std::move(backprop)});
  return Var(this, index);
}

Matrix& Tape::grad_slot(std::size_t index) {
  Matrix& g = grads_[index];
  if (g.empty() && !nodes_[index].value.empty()) {
    g = Matrix(nodes_[index].value.rows(), nodes_[index].value.cols());
  }
  return g;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward() called before any forward computation");
  if (!loss.valid() || &loss.tape() != this || loss.index() >= nodes_.size()) {
    throw StateError("backward(): loss node does not belong to this tape");
  }
  if (backward_done_) throw StateError("backward() already ran on this tape");
  if (nodes_[loss.index()].value.size() != 1) {
    throw StateError("backward(): loss must be a scalar node");
  }
  grads_.assign(nodes_.size(), Matrix());
  grad_slot(loss.index())(0, 0) = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    if (grads_[i].empty() || !nodes_[i].backprop) continue;
    nodes_[i].backprop(*this, i);
  }
  backward_done_ = true;
}

const Matrix& Tape::gradient(Var v) const {
  if (!backward_done_) throw StateError("gradient requested before backward()");
  if (&v.tape() != this) throw StateError("gradient(): variable belongs to another tape");
  if (grads_[v.index()].empty()) {
    // Unreached node: the loss does not depend on it.
    const Matrix& x = nodes_[v.index()].value;
    grads_[v.index()] = Matrix(x.rows(), x.cols());
  }
  return grads_[v.index()];
}

std::vector<std::uint8_t> Tape::activation_pattern() const {
  std::vector<std::uint8_t> pattern;
  for (std::size_t idx : activation_nodes_) {
    for (double x : nodes_[nodes_[idx].parents[0]].value.values()) pattern.push_back(x > 0.0);
  }
  return pattern;
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw StateError(std::string(op) + ": operands live on different tapes");
  return t;
}

void accumulate(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::Add, tdcm::add(a.value(), b.value()), {ia, ib},
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.upstream(self);
                  accumulate(tp.grad_slot(ia), g);
                  accumulate(tp.grad_slot(ib), g);
                });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::Sub, tdcm::subtract(a.value(), b.value()), {ia, ib},
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.upstream(self);
                  accumulate(tp.grad_slot(ia), g);
                  accumulate(tp.grad_slot(ib), scaled(g, -1.0));
                });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::Mul, hadamard(a.value(), b.value()), {ia, ib},
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.upstream(self);
                  accumulate(tp.grad_slot(ia), hadamard(g, tp.value(ib)));
                  accumulate(tp.grad_slot(ib), hadamard(g, tp.value(ia)));
                });
}

Var div(Var a, Var b) {
  Tape& t = same_tape(a, b, "div");
  require_same_shape(a.value(), b.value(), "div");
  for (double v : b.value().values()) {
    if (v == 0.0) {
      throw DomainError("div: zero divisor at node " + std::to_string(t.size()));
    }
  }
  Matrix out = a.value();
  auto o = out.values();
  auto d = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] /= d[i];
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::Div, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& num = tp.value(ia);
    const Matrix& den = tp.value(ib);
    Matrix& ga = tp.grad_slot(ia);
    Matrix& gb = tp.grad_slot(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = den.values()[i];
      ga.values()[i] += g.values()[i] / q;
      gb.values()[i] -= g.values()[i] * num.values()[i] / (q * q);
    }
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Scale, scaled(a.value(), s), {ia},
                       [ia, s](Tape& tp, std::size_t self) {
                         accumulate(tp.grad_slot(ia), scaled(tp.upstream(self), s));
                       });
}

Var neg(Var a) {
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Neg, scaled(a.value(), -1.0), {ia},
                       [ia](Tape& tp, std::size_t self) {
                         accumulate(tp.grad_slot(ia), scaled(tp.upstream(self), -1.0));
                       });
}

Var exp(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Exp, std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    accumulate(tp.grad_slot(ia), hadamard(tp.upstream(self), tp.value(self)));
  });
}

Var log(Var a) {
  Tape& t = a.tape();
  Matrix out = a.value();
  for (double& v : out.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive operand " + std::to_string(v) + " at node " +
                        std::to_string(t.size()));
    }
    v = std::log(v);
  }
  const std::size_t ia = a.index();
  return t.push(OpKind::Log, std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& x = tp.value(ia);
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] / x.values()[i];
  });
}

Var square(Var a) {
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Square, hadamard(a.value(), a.value()), {ia},
                       [ia](Tape& tp, std::size_t self) {
                         accumulate(tp.grad_slot(ia),
                                    scaled(hadamard(tp.upstream(self), tp.value(ia)), 2.0));
                       });
}

Var xlogx(Var a) {
  Tape& t = a.tape();
  Matrix out = a.value();
  for (double& v : out.values()) {
    if (v < 0.0) {
      throw DomainError("xlogx: negative operand at node " + std::to_string(t.size()));
    }
    v = v > 0.0 ? v * std::log(v) : 0.0;
  }
  const std::size_t ia = a.index();
  return t.push(OpKind::XLogX, std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& x = tp.value(ia);
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double xi = x.values()[i];
      // The derivative diverges at 0; an exactly empty cluster contributes nothing.
      if (xi > 0.0) ga.values()[i] += g.values()[i] * (std::log(xi) + 1.0);
    }
  });
}

Var maximum(Var a, Var b) {
  Tape& t = same_tape(a, b, "maximum");
  require_same_shape(a.value(), b.value(), "maximum");
  Matrix out = a.value();
  auto o = out.values();
  auto y = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::max(o[i], y[i]);
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::Maximum, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& x = tp.value(ia);
    const Matrix& y2 = tp.value(ib);
    Matrix& ga = tp.grad_slot(ia);
    Matrix& gb = tp.grad_slot(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Ties route the gradient to the first operand.
      if (x.values()[i] >= y2.values()[i]) {
        ga.values()[i] += g.values()[i];
      } else {
        gb.values()[i] += g.values()[i];
      }
    }
  });
}

Var activate(Var a, const ActivationKind& kind) {
  Matrix out = a.value();
  for (double& v : out.values()) v = apply_activation(kind, v);
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Activation, std::move(out), {ia},
                       [ia, kind](Tape& tp, std::size_t self) {
                         const Matrix& g = tp.upstream(self);
                         const Matrix& x = tp.value(ia);
                         Matrix& ga = tp.grad_slot(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           ga.values()[i] += g.values()[i] * activation_derivative(kind, x.values()[i]);
                         }
                       });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::MatMul, tdcm::matmul(a.value(), b.value()), {ia, ib},
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.upstream(self);
                  accumulate(tp.grad_slot(ia), tdcm::matmul_bt(g, tp.value(ib)));
                  accumulate(tp.grad_slot(ib), tdcm::matmul(tp.value(ia).transpose(), g));
                });
}

Var matmul_bt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_bt");
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(OpKind::MatMulBT, tdcm::matmul_bt(a.value(), b.value()), {ia, ib},
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.upstream(self);
                  accumulate(tp.grad_slot(ia), tdcm::matmul(g, tp.value(ib)));
                  accumulate(tp.grad_slot(ib), tdcm::matmul(g.transpose(), tp.value(ia)));
                });
}

Var transpose(Var a) {
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Transpose, a.value().transpose(), {ia},
                       [ia](Tape& tp, std::size_t self) {
                         accumulate(tp.grad_slot(ia), tp.upstream(self).transpose());
                       });
}

Var add_row(Var a, Var bias) {
  Tape& t = same_tape(a, bias, "add_row");
  const Matrix& x = a.value();
  const Matrix& r = bias.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("add_row: bias " + r.shape_string() + " does not broadcast over " +
                     x.shape_string());
  }
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += r(0, c);
  }
  const std::size_t ia = a.index(), ib = bias.index();
  return t.push(OpKind::AddRowBroadcast, std::move(out), {ia, ib},
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.upstream(self);
                  accumulate(tp.grad_slot(ia), g);
                  Matrix& gb = tp.grad_slot(ib);
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(i, c);
                });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Sum, Matrix(1, 1, s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)(0, 0);
    for (double& v : tp.grad_slot(ia).values()) v += g;
  });
}

Var column_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(i, c);
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::ColumnSum, std::move(out), {ia},
                       [ia](Tape& tp, std::size_t self) {
                         const Matrix& g = tp.upstream(self);
                         Matrix& ga = tp.grad_slot(ia);
                         for (std::size_t i = 0; i < ga.rows(); ++i)
                           for (std::size_t c = 0; c < ga.cols(); ++c) ga(i, c) += g(0, c);
                       });
}

Var symmetrize(Var a) {
  const std::size_t ia = a.index();
  return a.tape().push(OpKind::Symmetrize, tdcm::symmetrize(a.value()), {ia},
                       [ia](Tape& tp, std::size_t self) {
                         accumulate(tp.grad_slot(ia), tdcm::symmetrize(tp.upstream(self)));
                       });
}

Var pairwise_bilinear(Var z, Var c, Var wq, Var wk) {
  Tape& t = same_tape(z, c, "pairwise_bilinear");
  same_tape(z, wq, "pairwise_bilinear");
  same_tape(z, wk, "pairwise_bilinear");
  Matrix out = pairwise_bilinear_forms(z.value(), c.value(), wq.value(), wk.value());
  const std::size_t iz = z.index(), ic = c.index(), iq = wq.index(), ik = wk.index();
  return t.push(
      OpKind::PairwiseBilinear, std::move(out), {iz, ic, iq, ik},
      [iz, ic, iq, ik](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        const Matrix& zv = tp.value(iz);
        const Matrix& cv = tp.value(ic);
        const Matrix& q = tp.value(iq);
        const Matrix& k = tp.value(ik);
        const std::size_t b = zv.cols();
        Matrix gz(zv.rows(), b), gc(cv.rows(), b), gq(b, b), gk(b, b);
        std::vector<double> p(b), u(b), v(b), dp(b);
        for (std::size_t i = 0; i < zv.rows(); ++i) {
          for (std::size_t j = 0; j < cv.rows(); ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            for (std::size_t d = 0; d < b; ++d) p[d] = zv(i, d) - cv(j, d);
            for (std::size_t r = 0; r < b; ++r) {
              u[r] = dot(q.row(r), p);
              v[r] = dot(k.row(r), p);
            }
            // d(u.v) = v^T dW_Q p + u^T dW_K p + (W_Q^T v + W_K^T u)^T dp
            std::fill(dp.begin(), dp.end(), 0.0);
            for (std::size_t r = 0; r < b; ++r) {
              const double vr = gij * v[r];
              const double ur = gij * u[r];
              auto gq_row = gq.row(r);
              auto gk_row = gk.row(r);
              auto q_row = q.row(r);
              auto k_row = k.row(r);
              for (std::size_t d = 0; d < b; ++d) {
                gq_row[d] += vr * p[d];
                gk_row[d] += ur * p[d];
                dp[d] += vr * q_row[d] + ur * k_row[d];
              }
            }
            for (std::size_t d = 0; d < b; ++d) {
              gz(i, d) += dp[d];
              gc(j, d) -= dp[d];
            }
          }
        }
        accumulate(tp.grad_slot(iz), gz);
        accumulate(tp.grad_slot(ic), gc);
        accumulate(tp.grad_slot(iq), gq);
        accumulate(tp.grad_slot(ik), gk);
      });
}

Var softmax_rows(Var scores, double tau) {
  Matrix out = tdcm::softmax_rows(scores.value(), tau);
  const std::size_t is = scores.index();
  return scores.tape().push(OpKind::SoftmaxRows, std::move(out), {is},
                            [is, tau](Tape& tp, std::size_t self) {
                              const Matrix& g = tp.upstream(self);
                              const Matrix& y = tp.value(self);
                              Matrix& gs = tp.grad_slot(is);
                              for (std::size_t i = 0; i < y.rows(); ++i) {
                                const double inner = dot(g.row(i), y.row(i));
                                for (std::size_t j = 0; j < y.cols(); ++j) {
                                  gs(i, j) += y(i, j) * (g(i, j) - inner) / tau;
                                }
                              }
                            });
}

Var standardize_columns(Var x, double eps) {
  Matrix out = tdcm::standardize_columns(x.value(), eps);
  const std::size_t ix = x.index();
  return x.tape().push(OpKind::StandardizeColumns, std::move(out), {ix},
                       [ix, eps](Tape& tp, std::size_t self) {
                         const Matrix& g = tp.upstream(self);
                         const Matrix& y = tp.value(self);
                         const Matrix& xv = tp.value(ix);
                         Matrix& gx = tp.grad_slot(ix);
                         const std::size_t rows = y.rows();
                         const double n = static_cast<double>(rows);
                         for (std::size_t c = 0; c < y.cols(); ++c) {
                           double mean = 0.0, var = 0.0, g_mean = 0.0, gy_mean = 0.0;
                           for (std::size_t r = 0; r < rows; ++r) mean += xv(r, c);
                           mean /= n;
                           for (std::size_t r = 0; r < rows; ++r) {
                             var += (xv(r, c) - mean) * (xv(r, c) - mean);
                             g_mean += g(r, c);
                             gy_mean += g(r, c) * y(r, c);
                           }
                           const double s = std::sqrt(var / n + eps);
                           g_mean /= n;
                           gy_mean /= n;
                           for (std::size_t r = 0; r < rows; ++r) {
                             gx(r, c) += (g(r, c) - g_mean - y(r, c) * gy_mean) / s;
                           }
                         }
                       });
}

Var centroid_update(Var z, Var delta, Var previous, bool global_normalization) {
  Tape& t = same_tape(z, delta, "centroid_update");
  same_tape(z, previous, "centroid_update");
  Matrix out = weighted_centroids(z.value(), delta.value(), previous.value(), global_normalization);
  const std::size_t iz = z.index(), id = delta.index(), ip = previous.index();
  return t.push(
      OpKind::CentroidUpdate, std::move(out), {iz, id, ip},
      [iz, id, ip, global_normalization](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        const Matrix& zv = tp.value(iz);
        const Matrix& dv = tp.value(id);
        const Matrix& cv = tp.value(self);
        const std::size_t k = dv.cols();
        const std::size_t b = zv.cols();
        std::vector<double> mass(k, 0.0);
        for (std::size_t i = 0; i < dv.rows(); ++i)
          for (std::size_t j = 0; j < k; ++j) mass[j] += dv(i, j);
        Matrix& gz = tp.grad_slot(iz);
        Matrix& gd = tp.grad_slot(id);
        if (global_normalization) {
          double total = 0.0;
          for (double m : mass) total += m;
          if (total < kEmptyClusterMass) {
            accumulate(tp.grad_slot(ip), g);
            return;
          }
          double gc = 0.0;
          for (std::size_t j = 0; j < k; ++j) gc += dot(g.row(j), cv.row(j));
          for (std::size_t i = 0; i < zv.rows(); ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              const double w = dv(i, j) / total;
              gd(i, j) += (dot(g.row(j), zv.row(i)) - gc) / total;
              for (std::size_t d = 0; d < b; ++d) gz(i, d) += w * g(j, d);
            }
          }
          return;
        }
        Matrix& gp = tp.grad_slot(ip);
        for (std::size_t j = 0; j < k; ++j) {
          if (mass[j] < kEmptyClusterMass) {
            for (std::size_t d = 0; d < b; ++d) gp(j, d) += g(j, d);
          }
        }
        for (std::size_t i = 0; i < zv.rows(); ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            if (mass[j] < kEmptyClusterMass) continue;
            const double w = dv(i, j) / mass[j];
            double proj = 0.0;
            for (std::size_t d = 0; d < b; ++d) {
              gz(i, d) += w * g(j, d);
              proj += g(j, d) * (zv(i, d) - cv(j, d));
            }
            gd(i, j) += proj / mass[j];
          }
        }
      });
}

Recording forward(const LossBuilder& build, const std::vector<Matrix>& params) {
  Recording rec;
  rec.tape = std::make_unique<Tape>();
  rec.params.reserve(params.size());
  for (const Matrix& p : params) rec.params.push_back(rec.tape->variable(p));
  rec.loss = build(*rec.tape, rec.params);
  if (!rec.loss.valid() || rec.loss.value().size() != 1) {
    throw StateError("forward(): loss builder must return a scalar node");
  }
  return rec;
}

GradientReport backward(Recording& recording) {
  if (!recording.tape) throw StateError("backward() called before forward()");
  recording.tape->backward(recording.loss);
  GradientReport report;
  for (Var p : recording.params) {
    report.gradients.push_back(recording.tape->gradient(p));
    report.max_abs_gradient = std::max(report.max_abs_gradient, max_abs(report.gradients.back()));
  }
  return report;
}

FiniteDiffReport finite_diff_check(const LossBuilder& build, const std::vector<Matrix>& params,
                                   double h) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_check: h must be positive");
  Recording base = forward(build, params);
  const GradientReport analytic = backward(base);

  FiniteDiffReport report;
  std::vector<Matrix> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t e = 0; e < params[p].size(); ++e) {
      const double original = params[p].values()[e];
      probe[p].values()[e] = original + h;
      Recording plus = forward(build, probe);
      probe[p].values()[e] = original - h;
      Recording minus = forward(build, probe);
      probe[p].values()[e] = original;

      const double fp = plus.value();
      const double fm = minus.value();
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw EvaluationError("finite_diff_check: non-finite loss at perturbed parameter " +
                              std::to_string(p) + "[" + std::to_string(e) + "]");
      }
      if (plus.tape->activation_pattern() != minus.tape->activation_pattern()) {
        ++report.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double exact = analytic.gradients[p].values()[e];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      report.max_relative_error = std::max(report.max_relative_error, std::abs(exact - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace tdcm::ad
