#include "tdcm/objectives.hpp"

#include <cmath>

#include "tdcm/error.hpp"

namespace tdcm {

std::string alpha_mode_name(AlphaMode mode) {
  switch (mode) {
    case AlphaMode::Linear: return "linear";
    case AlphaMode::LastOnly: return "last";
    case AlphaMode::Uniform: return "uniform";
  }
  return "linear";
}

AlphaMode parse_alpha_mode(const std::string& name) {
  if (name == "linear") return AlphaMode::Linear;
  if (name == "last" || name == "last-only" || name == "last_only") return AlphaMode::LastOnly;
  if (name == "uniform") return AlphaMode::Uniform;
  throw ConfigError("unknown alpha mode '" + name + "' (expected linear, last, uniform)");
}

std::vector<double> alpha_schedule(std::size_t num_blocks, AlphaMode mode) {
  if (num_blocks == 0) throw ConfigError("alpha_schedule: L must be at least 1");
  std::vector<double> alpha(num_blocks, 0.0);
  switch (mode) {
    case AlphaMode::Linear: {
      const double total = static_cast<double>(num_blocks * (num_blocks + 1)) / 2.0;
      for (std::size_t l = 0; l < num_blocks; ++l) alpha[l] = static_cast<double>(l + 1) / total;
      break;
    }
    case AlphaMode::LastOnly: alpha.back() = 1.0; break;
    case AlphaMode::Uniform:
      for (double& a : alpha) a = 1.0 / static_cast<double>(num_blocks);
      break;
  }
  return alpha;
}

LossWeights LossWeights::defaults(std::size_t num_blocks, AlphaMode mode) {
  LossWeights w;
  w.alpha = alpha_schedule(num_blocks, mode);
  return w;
}

namespace {

void check_alpha(const StackTrace& trace, const LossWeights& w) {
  if (w.alpha.size() != trace.assignments.size() ||
      trace.states.size() != trace.assignments.size() + 1) {
    throw ConfigError("loss weights have " + std::to_string(w.alpha.size()) +
                      " alpha entries but the trace has " +
                      std::to_string(trace.assignments.size()) + " blocks");
  }
}

double orthogonality_term(const Matrix& w) {
  const Matrix d = subtract(matmul_bt(w, w), Matrix::identity(w.rows()));
  const Matrix sq = hadamard(d, d);
  double s = 0.0;
  for (double v : sq.values()) s += v;
  return s;
}

}  // namespace

ClusterProportions cluster_proportions(const AssignmentMatrix& delta) {
  const Matrix& d = delta.delta;
  std::vector<double> col(d.cols(), 0.0);
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j) col[j] += d(i, j);
  const double inv_n = 1.0 / static_cast<double>(d.rows());
  for (double& v : col) v *= inv_n;
  return {std::move(col)};
}

double clustering_loss(const StackTrace& trace, const Matrix& z, const ScoreParams& sp,
                       const LossWeights& w) {
  check_alpha(trace, w);
  const std::size_t n = z.rows();
  double acc = 0.0;
  for (std::size_t l = 0; l < trace.assignments.size(); ++l) {
    const Matrix s = score_matrix(z, trace.states[l].centroids, sp);
    const Matrix prod = hadamard(trace.assignments[l].delta, s);
    double term = 0.0;
    for (double v : prod.values()) term += v;
    const double weight = -w.alpha[l] / static_cast<double>(n);
    acc = acc + term * weight;
  }
  return acc;
}

double entropy_loss(const StackTrace& trace, const LossWeights& w) {
  check_alpha(trace, w);
  double acc = 0.0;
  for (std::size_t l = 0; l < trace.assignments.size(); ++l) {
    const ClusterProportions pi = cluster_proportions(trace.assignments[l]);
    double term = 0.0;
    for (double p : pi.pi) term += p > 0.0 ? p * std::log(p) : 0.0;
    const double weight = w.literal_entropy_sign ? -w.alpha[l] : w.alpha[l];
    acc = acc + term * weight;
  }
  return acc;
}

double orthogonality_penalty(const ScoreParams& sp) {
  return orthogonality_term(sp.effective_wq()) + orthogonality_term(sp.effective_wk());
}

LossBreakdown total_loss(const StackTrace& trace, const Matrix& z, const ScoreParams& sp,
                         const LossWeights& w) {
  LossBreakdown out;
  out.clustering = clustering_loss(trace, z, sp, w);
  out.entropy = entropy_loss(trace, w);
  out.orthogonality = orthogonality_penalty(sp);
  out.total = (out.clustering + out.entropy * w.beta) + out.orthogonality * w.lambda_orth;
  return out;
}

namespace taped {

namespace {

ad::Var orthogonality_node(ad::Tape& tape, ad::Var w) {
  const std::size_t b = w.value().rows();
  ad::Var d = ad::sub(ad::matmul_bt(w, w), tape.constant(Matrix::identity(b)));
  return ad::sum(ad::square(d));
}

}  // namespace

LossNodes total_loss(ad::Tape& tape, const StackNodes& stack, const LossWeights& w) {
  const std::size_t blocks = stack.assignments.size();
  if (w.alpha.size() != blocks) {
    throw ConfigError("loss weights have " + std::to_string(w.alpha.size()) +
                      " alpha entries but the stack has " + std::to_string(blocks) + " blocks");
  }
  const std::size_t n = stack.embeddings.value().rows();
  LossNodes out;
  out.clustering = tape.constant(Matrix(1, 1, 0.0));
  out.entropy = tape.constant(Matrix(1, 1, 0.0));
  for (std::size_t l = 0; l < blocks; ++l) {
    ad::Var term = ad::sum(ad::mul(stack.assignments[l], stack.scores[l]));
    const double weight = -w.alpha[l] / static_cast<double>(n);
    out.clustering = ad::add(out.clustering, ad::scale(term, weight));

    ad::Var pi = ad::scale(ad::column_sum(stack.assignments[l]), 1.0 / static_cast<double>(n));
    ad::Var neg_entropy = ad::sum(ad::xlogx(pi));
    const double e_weight = w.literal_entropy_sign ? -w.alpha[l] : w.alpha[l];
    out.entropy = ad::add(out.entropy, ad::scale(neg_entropy, e_weight));
  }
  out.orthogonality = ad::add(orthogonality_node(tape, stack.wq), orthogonality_node(tape, stack.wk));
  out.total = ad::add(ad::add(out.clustering, ad::scale(out.entropy, w.beta)),
                      ad::scale(out.orthogonality, w.lambda_orth));
  return out;
}

}  // namespace taped

}  // namespace tdcm
