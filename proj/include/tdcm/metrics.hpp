#pragma once

// External clustering metrics: NMI, ARI and ACC (best label bijection).

#include <cstddef>
#include <span>
#include <vector>

#include "tdcm/core_math.hpp"

namespace tdcm {

struct ContingencyTable {
  // counts[p][t] = |{n : pred_n = p and true_n = t}|
  std::vector<std::vector<long long>> counts;
  long long total = 0;

  std::size_t pred_classes() const noexcept { return counts.size(); }
  std::size_t true_classes() const noexcept { return counts.empty() ? 0 : counts[0].size(); }
  static ContingencyTable from_counts(std::vector<std::vector<long long>> counts);
};

struct MetricsReport {
  double nmi = 0.0;
  double ari = 0.0;
  double acc = 0.0;
};

ContingencyTable contingency(std::span<const int> pred, std::span<const int> truth);

// Mutual information over the geometric mean of the two entropies.
double nmi(const ContingencyTable& table);
double ari(const ContingencyTable& table);
double acc(std::span<const int> pred, std::span<const int> truth);
double acc(const ContingencyTable& table);

// Minimum-cost assignment on the zero-padded square version of `cost`.
// Entry r is the column assigned to row r, or -1 when r pairs with padding.
std::vector<int> hungarian(const Matrix& cost);

MetricsReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth);

}  // namespace tdcm
