#pragma once

// Unsupervised training objective: per-block clustering loss, negative
// entropy of cluster proportions and a soft orthogonality penalty on the
// effective score matrices.

#include <cstddef>
#include <string>
#include <vector>

#include "tdcm/autodiff.hpp"
#include "tdcm/model.hpp"

namespace tdcm {

enum class AlphaMode { Linear, LastOnly, Uniform };

std::string alpha_mode_name(AlphaMode mode);
AlphaMode parse_alpha_mode(const std::string& name);

// Per-block weights summing to one.
std::vector<double> alpha_schedule(std::size_t num_blocks, AlphaMode mode);

struct LossWeights {
  std::vector<double> alpha;
  double beta = 1.0;
  double lambda_orth = 1.0;
  // Flip the entropy term to +sum pi log pi's negation (the sign as printed),
  // which rewards collapsed assignments. Off by default.
  bool literal_entropy_sign = false;

  static LossWeights defaults(std::size_t num_blocks, AlphaMode mode = AlphaMode::Linear);
};

struct LossBreakdown {
  double clustering = 0.0;
  double entropy = 0.0;
  double orthogonality = 0.0;
  double total = 0.0;
};

struct ClusterProportions {
  std::vector<double> pi;
};

ClusterProportions cluster_proportions(const AssignmentMatrix& delta);

double clustering_loss(const StackTrace& trace, const Matrix& z, const ScoreParams& sp,
                       const LossWeights& w);
double entropy_loss(const StackTrace& trace, const LossWeights& w);
double orthogonality_penalty(const ScoreParams& sp);
LossBreakdown total_loss(const StackTrace& trace, const Matrix& z, const ScoreParams& sp,
                         const LossWeights& w);

namespace taped {

struct LossNodes {
  ad::Var clustering;
  ad::Var entropy;
  ad::Var orthogonality;
  ad::Var total;
};

LossNodes total_loss(ad::Tape& tape, const StackNodes& stack, const LossWeights& w);

}  // namespace taped

}  // namespace tdcm
