// Acceptance harness: one PASS/FAIL line per criterion.
//
//   tdcm_acceptance            run every criterion
//   tdcm_acceptance 1 4 9      run a subset

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tdcm/autodiff.hpp"
#include "tdcm/baselines.hpp"
#include "tdcm/experiments.hpp"
#include "tdcm/metrics.hpp"
#include "tdcm/model.hpp"
#include "tdcm/objectives.hpp"
#include "tdcm/trainer.hpp"

using namespace tdcm;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

Matrix blobs(const Matrix& centers, std::size_t per, double sd, std::mt19937_64& rng) {
  Matrix z = gaussian(centers.rows() * per, centers.cols(), rng, sd);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t d = 0; d < z.cols(); ++d) z(i, d) += centers(i / per, d);
  return z;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// Desk-scale transfer regime shared by the transfer and ablation criteria.
ExperimentConfig transfer_config(std::size_t k) {
  ExperimentConfig cfg;
  cfg.set("k", std::to_string(k));
  cfg.set("dim", "2");
  cfg.set("n_per_cluster", "200");
  cfg.set("perturbation", "0.5");
  cfg.set("baseline_restarts", "10");
  return cfg;
}

// 1: one Euclidean block is a soft k-means step; a deep cold stack is Lloyd.
Outcome criterion_kmeans_bridge() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 49, b = 1 + rng() % 8, k = 1 + rng() % 4;
    const Matrix z = gaussian(n, b, rng, 2.0);
    const Matrix c = gaussian(k, b, rng, 2.0);
    const double tau = 0.2 + 2.0 * std::uniform_real_distribution<double>()(rng);
    const SoftKMeansStep ref = soft_kmeans_step(z, c, tau);
    const AssignmentMatrix d = assign(z, {c, 0}, ScoreParams::identity(b, ActivationKind::identity(), tau));
    const CentroidState u = update_centroids(z, d, {c, 0});
    worst = std::max({worst, max_abs_diff(ref.delta, d.delta), max_abs_diff(ref.centroids, u.centroids)});
  }
  std::size_t label_mismatch = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + trial % 3, b = std::max<std::size_t>(k, 2 + trial % 4);
    Matrix centers = gaussian(k, b, rng, 10.0);
    const Matrix z = blobs(centers, 25, 0.5, rng);
    const BlockStackConfig cfg{10, b, k, CentroidInit::Identity, false};
    const StackTrace t = run_stack(z, cfg, ScoreParams::identity(b, ActivationKind::identity(), 1e-3), 0);
    const KMeansResult km = kmeans_lloyd(z, k, init_centroids(cfg, 0).centroids, 10, 0.0);
    const auto labels = t.labels();
    for (std::size_t i = 0; i < labels.size(); ++i) label_mismatch += labels[i] != km.labels[i];
  }
  return {worst <= 1e-12 && label_mismatch == 0,
          "max |soft k-means - block| = " + fmt("%.2e", worst) + ", hard-label mismatches vs Lloyd = " +
              std::to_string(label_mismatch)};
}

// Symmetric square root and inverse via Eigen.
Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

// 2: the Mahalanobis score reproduces shared-covariance GMM responsibilities.
Outcome criterion_gmm_bridge() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng() % 40, b = 1 + rng() % 6, k = 2 + rng() % 3;
    Eigen::MatrixXd a(b, b);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = std::normal_distribution<double>()(rng);
    const Eigen::MatrixXd sigma = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(b, b);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    const Eigen::MatrixXd root = es.operatorSqrt();
    const double tau = 0.3 + 2.0 * std::uniform_real_distribution<double>()(rng);
    const Eigen::MatrixXd cov = (tau / 2.0) * sigma.inverse();

    ScoreParams sp = ScoreParams::identity(b, ActivationKind::identity(), tau);
    sp.wq_raw = from_eigen(root);
    sp.wk_raw = from_eigen(root);
    const Matrix z = gaussian(n, b, rng, 2.0);
    const Matrix c = gaussian(k, b, rng, 2.0);
    const Matrix lcub = assign(z, {c, 0}, sp).delta;
    const Matrix em = gmm_responsibilities(z, c, from_eigen(cov));
    worst = std::max(worst, max_abs_diff(lcub, em));
  }
  return {worst <= 1e-10, "max |E-step - assign| = " + fmt("%.2e", worst) + " over 20 instances"};
}

// 3: ReLU scores peak at the centroid; the unconstrained bilinear form does not.
Outcome criterion_self_maximum() {
  std::mt19937_64 rng(303);
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t b = 1 + rng() % 6;
    ScoreParams sp = ScoreParams::identity(b, ActivationKind::relu(), 0.1 + trial % 7);
    sp.mode = trial % 2 == 0 ? ScoreMode::Raw : ScoreMode::Symmetric;
    sp.wq_raw = gaussian(b, b, rng);
    sp.wk_raw = gaussian(b, b, rng);
    const Matrix z = gaussian(1, b, rng, 3.0);
    const Matrix c = gaussian(1, b, rng, 3.0);
    if (score(z.row(0), c.row(0), sp) > score(c.row(0), c.row(0), sp)) ++violations;
  }
  ScoreParams raw = ScoreParams::identity(2, ActivationKind::identity(), 1.0);
  raw.mode = ScoreMode::Raw;
  raw.wq_raw = Matrix::from_rows({{1, 0}, {1, 0}});
  raw.wk_raw = Matrix::from_rows({{0, -1}, {0, -1}});
  const std::vector<double> z{1.0, 0.0};
  const std::vector<double> c{0.0, -1.0};
  const double at_z = score(z, c, raw);
  const double at_c = score(c, c, raw);
  std::size_t counter = at_z > at_c ? 1 : 0;
  // The same form on random draws violates the bound often.
  for (int trial = 0; trial < 1000; ++trial) {
    ScoreParams r = raw;
    r.wq_raw = gaussian(2, 2, rng);
    r.wk_raw = gaussian(2, 2, rng);
    const Matrix zz = gaussian(1, 2, rng), cc = gaussian(1, 2, rng);
    counter += score(zz.row(0), cc.row(0), r) > score(cc.row(0), cc.row(0), r);
  }
  return {violations == 0 && counter >= 1,
          "ReLU violations " + std::to_string(violations) + "/10000; counterexample score " + fmt("%+.1f", at_z) +
              " vs " + fmt("%.1f", at_c) + ", unconstrained violations " + std::to_string(counter)};
}

// 4: reverse-mode gradients of the full objective against central differences.
// Batch standardisation of the embeddings makes the loss invariant to the
// last encoder bias, so its gradient is identically zero and a relative error
// on it measures only rounding noise. With standardisation on, that bias is
// held constant in the difference check and its analytic gradient is required
// to vanish instead.
Outcome criterion_gradients() {
  double worst_plain = 0.0, worst_std = 0.0, bias_grad = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    const Matrix x = gaussian(8, 3, rng);
    EncoderParams enc = EncoderParams::mlp(3, 6, 4, 2, seed);
    for (auto& l : enc.layers)
      for (double& v : l.bias.values()) v = std::normal_distribution<double>(0.0, 0.1)(rng);
    const ScoreParams settings = ScoreParams::identity(4, ActivationKind::relu(), 1.0);
    const BlockStackConfig cfg{2, 4, 2, CentroidInit::Identity, false};
    const Matrix c0 = init_centroids(cfg, 0).centroids;
    const LossWeights w = LossWeights::defaults(2);
    std::vector<Matrix> params;
    for (const auto& l : enc.layers) {
      params.push_back(l.weight);
      params.push_back(l.bias);
    }
    params.push_back(add(Matrix::identity(4), gaussian(4, 4, rng, 0.3)));
    params.push_back(add(Matrix::identity(4), gaussian(4, 4, rng, 0.3)));
    const std::size_t last_bias = 2 * enc.layers.size() - 1;

    const ad::LossBuilder plain = [&](ad::Tape& tape, std::span<const ad::Var> p) {
      return taped::total_loss(tape, taped::forward(tape, p, x, c0, cfg, settings, enc.hidden_activation, false), w)
          .total;
    };
    const auto a = ad::finite_diff_check(plain, params);

    std::vector<Matrix> reduced = params;
    reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(last_bias));
    const ad::LossBuilder standardized = [&](ad::Tape& tape, std::span<const ad::Var> p) {
      std::vector<ad::Var> full(p.begin(), p.end());
      full.insert(full.begin() + static_cast<std::ptrdiff_t>(last_bias), tape.constant(params[last_bias]));
      return taped::total_loss(tape, taped::forward(tape, full, x, c0, cfg, settings, enc.hidden_activation, true), w)
          .total;
    };
    const auto b = ad::finite_diff_check(standardized, reduced);

    const ad::LossBuilder all = [&](ad::Tape& tape, std::span<const ad::Var> p) {
      return taped::total_loss(tape, taped::forward(tape, p, x, c0, cfg, settings, enc.hidden_activation, true), w)
          .total;
    };
    ad::Recording rec = ad::forward(all, params);
    const ad::GradientReport g = ad::backward(rec);
    for (double v : g.gradients[last_bias].values()) bias_grad = std::max(bias_grad, std::abs(v));

    worst_plain = std::max(worst_plain, a.max_relative_error);
    worst_std = std::max(worst_std, b.max_relative_error);
    checked += a.checked + b.checked;
    skipped += a.skipped + b.skipped;
  }
  return {worst_plain <= 1e-5 && worst_std <= 1e-5 && bias_grad <= 1e-12 && checked > 0,
          "max relative error " + fmt("%.2e", worst_plain) + " unstandardised, " + fmt("%.2e", worst_std) +
              " standardised; |grad| of the cancelled bias " + fmt("%.1e", bias_grad) + "; " +
              std::to_string(checked) + " coordinates checked, " + std::to_string(skipped) +
              " straddling a ReLU kink skipped"};
}

// 5: transfer gap of TDCM against frozen-centroid baselines.
Outcome criterion_transfer_trend() {
  struct Cell {
    double tdcm = 0, kmeans = 0, gmm = 0;
  };
  std::map<std::size_t, Cell> per_k;
  Cell pooled;
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t k : {2u, 3u, 5u})
    for (std::size_t p = 0; p < 5; ++p) jobs.emplace_back(k, p);
  std::vector<Cell> results(jobs.size());
  parallel_for(jobs.size(), worker_count(), [&](std::size_t j) {
    const auto [k, p] = jobs[j];
    ExperimentConfig cfg = transfer_config(k);
    const DomainPair pair = make_pair(cfg, p);
    Cell c;
    for (int s = 0; s < 5; ++s) {
      cfg.set("seed", std::to_string(s));
      c.tdcm += run_tdcm(cfg, pair.source, pair.target).diff().nmi / 5.0;
    }
    cfg.set("seed", "0");
    cfg.set("baseline", "kmeans");
    c.kmeans = run_baseline(cfg, pair.source, pair.target).diff().nmi;
    cfg.set("baseline", "gmm");
    c.gmm = run_baseline(cfg, pair.source, pair.target).diff().nmi;
    results[j] = c;
  });
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    Cell& pk = per_k[jobs[j].first];
    pk.tdcm += results[j].tdcm / 5.0;
    pk.kmeans += results[j].kmeans / 5.0;
    pk.gmm += results[j].gmm / 5.0;
    pooled.tdcm += results[j].tdcm / 15.0;
    pooled.kmeans += results[j].kmeans / 15.0;
    pooled.gmm += results[j].gmm / 15.0;
  }
  std::ostringstream d;
  for (const auto& [k, c] : per_k) {
    d << "K=" << k << " tdcm " << fmt("%.3f", c.tdcm) << " kmeans " << fmt("%.3f", c.kmeans) << " gmm "
      << fmt("%.3f", c.gmm) << "; ";
  }
  d << "pooled NMI diff tdcm " << fmt("%.3f", pooled.tdcm) << " (need <= 0.10), kmeans "
    << fmt("%.3f", pooled.kmeans) << ", gmm " << fmt("%.3f", pooled.gmm) << " (need >= tdcm + 0.05)";
  const bool pass = pooled.tdcm <= 0.10 && pooled.kmeans >= pooled.tdcm + 0.05 && pooled.gmm >= pooled.tdcm + 0.05;
  return {pass, d.str()};
}

// 6: ablations on the K=5 pair.
Outcome criterion_ablation() {
  const std::vector<std::pair<std::string, std::string>> variants = {{"full", ""}, {"R", "variant_r"}, {"O", "variant_o"}};
  std::vector<double> target(variants.size() * 5, 0.0);
  const ExperimentConfig base = transfer_config(5);
  const DomainPair pair = make_pair(base, 0);
  parallel_for(target.size(), worker_count(), [&](std::size_t j) {
    ExperimentConfig cfg = base;
    const auto& key = variants[j / 5].second;
    if (!key.empty()) cfg.set(key, "true");
    cfg.set("seed", std::to_string(j % 5));
    target[j] = run_tdcm(cfg, pair.source, pair.target).target.nmi;
  });
  std::vector<double> mean(variants.size(), 0.0);
  for (std::size_t j = 0; j < target.size(); ++j) mean[j / 5] += target[j] / 5.0;
  return {mean[0] > mean[1] && mean[0] > mean[2],
          "mean target NMI full " + fmt("%.4f", mean[0]) + ", variant-R " + fmt("%.4f", mean[1]) + ", variant-O " +
              fmt("%.4f", mean[2])};
}

bool well_formed(const std::string& csv, std::size_t expected_rows, std::string& why) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  if (line != "axis,value,pair,seed,source_nmi,source_ari,source_acc,target_nmi,target_ari,target_acc,diff_nmi,diff_ari,"
              "diff_acc") {
    why = "bad header";
    return false;
  }
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 13) {
      why = "row with " + std::to_string(fields.size()) + " fields";
      return false;
    }
    for (std::size_t i = 4; i < 13; ++i) {
      char* end = nullptr;
      const double v = std::strtod(fields[i].c_str(), &end);
      if (end == fields[i].c_str() || *end != '\0' || !std::isfinite(v)) {
        why = "non-finite metric '" + fields[i] + "'";
        return false;
      }
    }
  }
  if (rows != expected_rows) {
    why = std::to_string(rows) + " rows, expected " + std::to_string(expected_rows);
    return false;
  }
  return true;
}

// 7: sensitivity sweeps over tau and L.
Outcome criterion_sweeps() {
  ExperimentConfig cfg = transfer_config(2);
  const std::size_t seeds = 5;
  cfg.set("seeds", std::to_string(seeds));
  const std::vector<std::string> taus{"0.1", "0.5", "1", "2", "5"};
  const std::vector<std::string> ls{"2", "4", "8", "16"};
  const auto tau_rows = sweep(cfg, "tau", taus, worker_count());
  const auto l_rows = sweep(cfg, "L", ls, worker_count());
  std::string why_tau, why_l;
  const bool ok_tau = well_formed(sweep_csv(tau_rows), taus.size() * seeds, why_tau);
  const bool ok_l = well_formed(sweep_csv(l_rows), ls.size() * seeds, why_l);

  auto summary = [](const std::vector<SweepRow>& rows) {
    std::map<std::string, std::pair<double, int>> acc;
    std::vector<std::string> order;
    for (const auto& r : rows) {
      if (!acc.count(r.value)) order.push_back(r.value);
      acc[r.value].first += r.target.nmi;
      acc[r.value].second += 1;
    }
    std::string best;
    double best_v = -1.0;
    std::ostringstream s;
    for (const auto& v : order) {
      const double m = acc[v].first / acc[v].second;
      s << v << ":" << fmt("%.3f", m) << " ";
      if (m > best_v) {
        best_v = m;
        best = v;
      }
    }
    s << "(best " << best << ")";
    return s.str();
  };
  std::string detail = "target NMI by tau " + summary(tau_rows) + "; by L " + summary(l_rows);
  if (!ok_tau) detail += "; tau table: " + why_tau;
  if (!ok_l) detail += "; L table: " + why_l;
  return {ok_tau && ok_l, detail};
}

// Exhaustive bijection search for ACC.
double brute_acc(const std::vector<int>& pred, const std::vector<int>& truth) {
  const int k = std::max(*std::max_element(pred.begin(), pred.end()), *std::max_element(truth.begin(), truth.end())) + 1;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += perm[static_cast<std::size_t>(pred[i])] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

double direct_nmi(const std::vector<std::vector<long long>>& t) {
  double n = 0;
  std::vector<double> a(t.size()), b(t[0].size());
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[0].size(); ++j) {
      n += t[i][j];
      a[i] += t[i][j];
      b[j] += t[i][j];
    }
  double mi = 0, ha = 0, hb = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[0].size(); ++j)
      if (t[i][j] > 0) mi += t[i][j] / n * std::log(n * t[i][j] / (a[i] * b[j]));
  for (double v : a) ha -= v > 0 ? v / n * std::log(v / n) : 0.0;
  for (double v : b) hb -= v > 0 ? v / n * std::log(v / n) : 0.0;
  return mi / std::sqrt(ha * hb);
}

double direct_ari(const std::vector<std::vector<long long>>& t) {
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double n = 0, sij = 0;
  std::vector<double> a(t.size()), b(t[0].size());
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[0].size(); ++j) {
      n += t[i][j];
      a[i] += t[i][j];
      b[j] += t[i][j];
      sij += c2(t[i][j]);
    }
  double sa = 0, sb = 0;
  for (double v : a) sa += c2(v);
  for (double v : b) sb += c2(v);
  const double e = sa * sb / c2(n);
  return (sij - e) / (0.5 * (sa + sb) - e);
}

// 8: metric implementations against exhaustive and direct-formula oracles.
Outcome criterion_metrics() {
  std::mt19937_64 rng(808);
  std::size_t acc_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 3);
    const std::size_t n = 1 + rng() % 10;
    std::vector<int> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng() % static_cast<unsigned>(k));
      t[i] = static_cast<int>(rng() % static_cast<unsigned>(k));
    }
    acc_bad += std::abs(acc(p, t) - brute_acc(p, t)) > 1e-12;
  }
  const std::vector<std::vector<std::vector<long long>>> stored = {
      {{5, 1}, {1, 5}}, {{10, 2, 0}, {1, 8, 3}, {0, 1, 9}}, {{3, 0}, {4, 2}, {0, 7}}, {{1, 2, 3}, {4, 5, 6}}, {{7, 0}, {0, 7}},
  };
  double worst = 0.0;
  for (const auto& t : stored) {
    const auto table = ContingencyTable::from_counts(t);
    worst = std::max({worst, std::abs(nmi(table) - direct_nmi(t)), std::abs(ari(table) - direct_ari(t))});
  }
  return {acc_bad == 0 && worst <= 1e-9,
          "ACC mismatches " + std::to_string(acc_bad) + "/1000; max NMI/ARI deviation " + fmt("%.1e", worst)};
}

// 9: invariant suite.
Outcome criterion_invariants() {
  std::mt19937_64 rng(909);
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.emplace_back(what);
  };

  bool stochastic = true, hull = true;
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = gaussian(40, 3, rng, 2.0);
    ScoreParams sp = ScoreParams::identity(3, ActivationKind::relu(), 0.2 + 0.1 * trial);
    sp.wq_raw = add(Matrix::identity(3), gaussian(3, 3, rng, 0.4));
    sp.wk_raw = add(Matrix::identity(3), gaussian(3, 3, rng, 0.4));
    const StackTrace t = run_stack(z, {4, 3, 3, CentroidInit::Identity, false}, sp, 0);
    for (const auto& a : t.assignments)
      for (std::size_t i = 0; i < a.delta.rows(); ++i) {
        double s = 0.0;
        for (double v : a.delta.row(i)) {
          stochastic = stochastic && v >= 0.0;
          s += v;
        }
        stochastic = stochastic && std::abs(s - 1.0) < 1e-12;
      }
    // Convex-hull membership: each centroid is the responsibility-weighted mean.
    for (std::size_t l = 1; l < t.states.size(); ++l) {
      const Matrix& delta = t.assignments[l - 1].delta;
      for (std::size_t j = 0; j < 3; ++j) {
        double mass = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) mass += delta(i, j);
        if (mass < kEmptyClusterMass) continue;
        for (std::size_t d = 0; d < 3; ++d) {
          double lo = 1e300, hi = -1e300;
          for (std::size_t i = 0; i < z.rows(); ++i) {
            lo = std::min(lo, z(i, d));
            hi = std::max(hi, z(i, d));
          }
          hull = hull && t.states[l].centroids(j, d) >= lo - 1e-12 && t.states[l].centroids(j, d) <= hi + 1e-12;
        }
      }
    }
  }
  expect(stochastic, "row-stochasticity");
  expect(hull, "convex hull");

  {
    const Matrix z = gaussian(30, 4, rng, 2.0);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ScoreParams sp = ScoreParams::identity(4, ActivationKind::relu(), 0.8);
    sp.wq_raw = add(Matrix::identity(4), gaussian(4, 4, rng, 0.3));
    sp.wk_raw = add(Matrix::identity(4), gaussian(4, 4, rng, 0.3));
    const BlockStackConfig cfg{6, 4, 3, CentroidInit::Identity, false};
    const StackTrace a = run_stack(z, cfg, sp, 0);
    const StackTrace b = run_stack(select_rows(z, perm), cfg, sp, 0);
    bool ok = max_abs_diff(a.states.back().centroids, b.states.back().centroids) < 1e-12;
    const auto la = a.labels(), lb = b.labels();
    for (std::size_t i = 0; i < perm.size(); ++i) ok = ok && lb[i] == la[perm[i]];
    expect(ok, "permutation invariance");
  }

  bool lloyd = true, em = true;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix z = blobs(gaussian(3, 2, rng, 4.0), 30, 1.0, rng);
    const KMeansResult km = kmeans_lloyd(z, 3, kmeans_plus_plus_init(z, 3, trial));
    for (std::size_t i = 1; i < km.inertia_history.size(); ++i) lloyd = lloyd && km.inertia_history[i] <= km.inertia_history[i - 1] + 1e-9;
    GmmOptions opt;
    opt.update_covariance = true;
    const GmmResult g = gmm_em_shared(z, 3, km.centroids, Matrix::identity(2), opt);
    for (std::size_t i = 1; i < g.log_likelihood_history.size(); ++i)
      em = em && g.log_likelihood_history[i] >= g.log_likelihood_history[i - 1] - 1e-9;
  }
  expect(lloyd, "Lloyd inertia monotonicity");
  expect(em, "EM log-likelihood monotonicity");

  ExperimentConfig cfg = transfer_config(3);
  cfg.set("epochs", "40");
  const DomainPair pair = make_pair(cfg, 0);
  const Checkpoint ck = train(pair.source.x, cfg);
  const auto path = (std::filesystem::temp_directory_path() / "tdcm_acceptance_ckpt.json").string();
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  expect(back.params.flatten() == ck.params.flatten() && back.adam.m == ck.adam.m && back.adam.v == ck.adam.v &&
             infer_trace(back, pair.target.x).states.back().centroids ==
                 infer_trace(ck, pair.target.x).states.back().centroids,
         "checkpoint round trip");

  const Checkpoint again = train(pair.source.x, cfg);
  expect(checkpoint_to_json(again) == checkpoint_to_json(ck), "determinism");

  std::string detail = "7 invariants checked";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

// 10: run_stack cost grows linearly in N.
Outcome criterion_complexity() {
  std::mt19937_64 rng(1010);
  const std::size_t n = 20000, b = 8, k = 4;
  const Matrix z2 = gaussian(2 * n, b, rng);
  const Matrix z1 = select_rows(z2, [&] {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }());
  ScoreParams sp = ScoreParams::identity(b, ActivationKind::relu(), 1.0);
  sp.wq_raw = add(Matrix::identity(b), gaussian(b, b, rng, 0.1));
  sp.wk_raw = sp.wq_raw;
  const BlockStackConfig cfg{4, b, k, CentroidInit::Identity, false};
  auto time_once = [&](const Matrix& z) {
    const auto t0 = Clock::now();
    const StackTrace t = run_stack(z, cfg, sp, 0);
    const double s = seconds_since(t0);
    if (t.states.size() != 5) std::abort();
    return s;
  };
  time_once(z2);
  std::vector<double> ratios;
  std::vector<double> t1s, t2s;
  for (int trial = 0; trial < 5; ++trial) {
    const double a = time_once(z1);
    const double c = time_once(z2);
    t1s.push_back(a);
    t2s.push_back(c);
  }
  std::sort(t1s.begin(), t1s.end());
  std::sort(t2s.begin(), t2s.end());
  const double ratio = t2s[2] / t1s[2];
  return {ratio >= 1.5 && ratio <= 3.0,
          "median run_stack time N=" + std::to_string(n) + " " + fmt("%.4f", t1s[2]) + " s, 2N " + fmt("%.4f", t2s[2]) +
              " s, ratio " + fmt("%.2f", ratio) + " (need [1.5, 3.0])"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "k-means bridge", 10, criterion_kmeans_bridge},
      {2, "GMM bridge", 10, criterion_gmm_bridge},
      {3, "self-maximum property", 5, criterion_self_maximum},
      {4, "gradient correctness", 30, criterion_gradients},
      {5, "transfer trend", 1800, criterion_transfer_trend},
      {6, "ablation trend", 1800, criterion_ablation},
      {7, "sensitivity sweeps", 3600, criterion_sweeps},
      {8, "metric correctness", 10, criterion_metrics},
      {9, "invariant suite", 120, criterion_invariants},
      {10, "complexity smoke check", 60, criterion_complexity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(t0);
    const bool in_budget = elapsed <= c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s criterion %d (%s): %s [%.1f s of %.0f s budget%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), elapsed, c.budget_seconds, in_budget ? "" : ", OVER BUDGET");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
