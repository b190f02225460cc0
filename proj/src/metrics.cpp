#include "tdcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tdcm/error.hpp"

namespace tdcm {

ContingencyTable ContingencyTable::from_counts(std::vector<std::vector<long long>> counts) {
  ContingencyTable t;
  const std::size_t cols = counts.empty() ? 0 : counts[0].size();
  for (const auto& row : counts) {
    if (row.size() != cols) throw ShapeError("contingency table rows are ragged");
    for (long long v : row) {
      if (v < 0) throw ParameterError("contingency counts must be non-negative");
      t.total += v;
    }
  }
  t.counts = std::move(counts);
  return t;
}

ContingencyTable contingency(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("contingency: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " true labels");
  }
  int max_p = -1, max_t = -1;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0) throw ParameterError("contingency: labels must be non-negative");
    max_p = std::max(max_p, pred[i]);
    max_t = std::max(max_t, truth[i]);
  }
  std::vector<std::vector<long long>> counts(static_cast<std::size_t>(max_p + 1),
                                             std::vector<long long>(static_cast<std::size_t>(max_t + 1), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++counts[static_cast<std::size_t>(pred[i])][static_cast<std::size_t>(truth[i])];
  }
  return ContingencyTable::from_counts(std::move(counts));
}

namespace {

std::vector<double> row_sums(const ContingencyTable& t) {
  std::vector<double> s(t.pred_classes(), 0.0);
  for (std::size_t i = 0; i < t.pred_classes(); ++i)
    for (long long v : t.counts[i]) s[i] += static_cast<double>(v);
  return s;
}

std::vector<double> col_sums(const ContingencyTable& t) {
  std::vector<double> s(t.true_classes(), 0.0);
  for (const auto& row : t.counts)
    for (std::size_t j = 0; j < row.size(); ++j) s[j] += static_cast<double>(row[j]);
  return s;
}

double entropy_of(const std::vector<double>& sums, double n) {
  double h = 0.0;
  for (double s : sums) {
    if (s > 0.0) h -= (s / n) * std::log(s / n);
  }
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double nmi(const ContingencyTable& table) {
  if (table.total < 1) throw ParameterError("nmi: empty contingency table");
  const double n = static_cast<double>(table.total);
  const auto a = row_sums(table);
  const auto b = col_sums(table);
  const double ha = entropy_of(a, n);
  const double hb = entropy_of(b, n);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < table.pred_classes(); ++i) {
    for (std::size_t j = 0; j < table.true_classes(); ++j) {
      const double nij = static_cast<double>(table.counts[i][j]);
      if (nij == 0.0) continue;
      mi += (nij / n) * std::log(n * nij / (a[i] * b[j]));
    }
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

double ari(const ContingencyTable& table) {
  if (table.total < 2) throw ParameterError("ari: needs at least two samples");
  const double n = static_cast<double>(table.total);
  double index = 0.0;
  for (const auto& row : table.counts)
    for (long long v : row) index += comb2(static_cast<double>(v));
  double sum_a = 0.0, sum_b = 0.0;
  for (double s : row_sums(table)) sum_a += comb2(s);
  for (double s : col_sums(table)) sum_b += comb2(s);
  const double expected = sum_a * sum_b / comb2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) {
    // Both partitions trivial (all singletons or one block): identical iff index matches.
    return index == max_index ? 1.0 : 0.0;
  }
  return (index - expected) / (max_index - expected);
}

std::vector<int> hungarian(const Matrix& cost) {
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  if (!cost.all_finite()) throw ParameterError("hungarian: costs must be finite");
  const std::size_t n = std::max(rows, cols);
  auto c = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? cost(i, j) : 0.0;
  };
  // Shortest augmenting path formulation with potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i >= 1 && i <= rows && j <= cols) assignment[i - 1] = static_cast<int>(j - 1);
  }
  return assignment;
}

double acc(const ContingencyTable& table) {
  if (table.total < 1) throw ParameterError("acc: empty contingency table");
  if (table.pred_classes() > 64 || table.true_classes() > 64) {
    throw ParameterError("acc: at most 64 predicted and true classes are supported");
  }
  Matrix cost(table.pred_classes(), table.true_classes());
  for (std::size_t i = 0; i < table.pred_classes(); ++i)
    for (std::size_t j = 0; j < table.true_classes(); ++j)
      cost(i, j) = -static_cast<double>(table.counts[i][j]);
  const auto match = hungarian(cost);
  long long hits = 0;
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] >= 0) hits += table.counts[i][static_cast<std::size_t>(match[i])];
  }
  return static_cast<double>(hits) / static_cast<double>(table.total);
}

double acc(std::span<const int> pred, std::span<const int> truth) {
  return acc(contingency(pred, truth));
}

MetricsReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth) {
  const ContingencyTable t = contingency(pred, truth);
  MetricsReport r;
  r.nmi = nmi(t);
  r.ari = t.total >= 2 ? ari(t) : 1.0;
  r.acc = acc(t);
  return r;
}

}  // namespace tdcm
