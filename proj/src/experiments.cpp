#include "tdcm/experiments.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tdcm/baselines.hpp"
#include "tdcm/error.hpp"

namespace tdcm {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

DomainSpec domain_spec_from(const ExperimentConfig& cfg, std::size_t pair_index) {
  cfg.validate();
  DomainSpec spec;
  spec.clusters = cfg.get_size("k");
  spec.dim = cfg.get_size("dim");
  spec.n_per_cluster = cfg.get_size("n_per_cluster");
  spec.center_box = cfg.get_double("center_box");
  spec.cov_scale = cfg.get_double("cov_scale");
  spec.seed = splitmix(cfg.get_uint("data_seed") * 2 + 0) + pair_index;
  return spec;
}

std::uint64_t target_seed_for(const ExperimentConfig& cfg, std::size_t pair_index) {
  return splitmix(cfg.get_uint("data_seed") * 2 + 1) + pair_index;
}

DomainPair make_pair(const ExperimentConfig& cfg, std::size_t pair_index) {
  return make_domain_pair(domain_spec_from(cfg, pair_index), cfg.get_double("perturbation"),
                          target_seed_for(cfg, pair_index));
}

RunRecord run_tdcm(const ExperimentConfig& cfg, const Domain& source, const Domain& target,
                   Checkpoint* checkpoint) {
  const auto start = std::chrono::steady_clock::now();
  Checkpoint ckpt = train(source.x, cfg);
  RunRecord r = evaluate_transfer(ckpt, source, target);
  r.wall_seconds = seconds_since(start);
  if (checkpoint != nullptr) *checkpoint = std::move(ckpt);
  return r;
}

namespace {

KMeansResult best_kmeans(const ExperimentConfig& cfg, const Matrix& x) {
  const std::size_t k = cfg.get_size("k");
  const std::size_t restarts = cfg.get_size("baseline_restarts");
  std::mt19937_64 rng(cfg.get_uint("seed"));
  KMeansResult best;
  bool have = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    KMeansResult km = kmeans_lloyd(x, k, kmeans_plus_plus_init(x, k, rng()), cfg.get_size("baseline_max_iter"),
                                   cfg.get_double("baseline_tol"));
    if (!have || km.inertia < best.inertia) {
      best = std::move(km);
      have = true;
    }
  }
  return best;
}

Matrix pooled_covariance(const Matrix& x, const KMeansResult& km) {
  const std::size_t d = x.cols();
  Matrix cov(d, d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto c = km.centroids.row(static_cast<std::size_t>(km.labels[i]));
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += (x(i, a) - c[a]) * (x(i, b) - c[b]);
  }
  for (double& v : cov.values()) v /= static_cast<double>(x.rows());
  for (std::size_t a = 0; a < d; ++a) cov(a, a) += 1e-6;
  return symmetrize(cov);
}

}  // namespace

RunRecord run_baseline(const ExperimentConfig& cfg, const Domain& source, const Domain& target) {
  const auto start = std::chrono::steady_clock::now();
  const BaselineKind kind = parse_baseline(cfg.get("baseline"));
  RunRecord r;
  r.model = baseline_name(kind);
  r.config = cfg;
  const KMeansResult km = best_kmeans(cfg, source.x);
  std::vector<int> src_labels;
  std::vector<int> tgt_labels;
  switch (kind) {
    case BaselineKind::KMeans:
      src_labels = km.labels;
      tgt_labels = transfer_eval_fixed_centroids(km, target.x);
      break;
    case BaselineKind::Gmm: {
      GmmOptions opt;
      opt.max_iter = cfg.get_size("baseline_max_iter");
      opt.tol = cfg.get_double("baseline_tol");
      opt.update_covariance = true;
      opt.covariance_floor = 1e-6;
      const GmmResult g = gmm_em_shared(source.x, km.centroids.rows(), km.centroids,
                                        pooled_covariance(source.x, km), opt);
      src_labels = argmax_rows(g.responsibilities);
      tgt_labels = transfer_eval_fixed_centroids(g, target.x);
      break;
    }
    case BaselineKind::SoftKMeans: {
      const double tau = cfg.get_double("tau");
      Matrix c = km.centroids;
      for (std::size_t it = 0; it < cfg.get_size("baseline_max_iter"); ++it) {
        SoftKMeansStep step = soft_kmeans_step(source.x, c, tau);
        const double shift = max_abs_diff(step.centroids, c);
        c = std::move(step.centroids);
        if (shift < cfg.get_double("baseline_tol")) break;
      }
      src_labels = argmax_rows(soft_kmeans_step(source.x, c, tau).delta);
      tgt_labels = argmax_rows(soft_kmeans_step(target.x, c, tau).delta);
      break;
    }
  }
  r.source = evaluate_clustering(src_labels, source.labels);
  r.target = evaluate_clustering(tgt_labels, target.labels);
  r.wall_seconds = seconds_since(start);
  return r;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(jobs, count); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::string sweep_axis_key(const std::string& axis) {
  if (axis == "tau") return "tau";
  if (axis == "L") return "num_blocks";
  if (axis == "alpha-mode") return "alpha_mode";
  if (axis == "beta") return "beta";
  if (axis == "perturbation") return "perturbation";
  throw ConfigError("unknown sweep axis '" + axis + "' (expected tau, L, alpha-mode, beta, perturbation)");
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            const std::vector<std::string>& values, std::size_t jobs) {
  const std::string key = sweep_axis_key(axis);
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (const std::string& v : values) {
    ExperimentConfig c = base;
    c.set(key, v);
    c.validate();
    configs.push_back(std::move(c));
  }
  const std::size_t pairs = base.get_size("num_pairs");
  const std::size_t seeds = base.get_size("seeds");
  const std::uint64_t seed0 = base.get_uint("seed");
  std::vector<SweepRow> rows(values.size() * pairs * seeds);
  parallel_for(rows.size(), jobs, [&](std::size_t idx) {
    const std::size_t vi = idx / (pairs * seeds);
    const std::size_t pi = (idx / seeds) % pairs;
    const std::size_t si = idx % seeds;
    ExperimentConfig c = configs[vi];
    c.set("seed", std::to_string(seed0 + si));
    const DomainPair pair = make_pair(c, pi);
    const RunRecord r = run_tdcm(c, pair.source, pair.target);
    rows[idx] = {axis, values[vi], pi, seed0 + si, r.source, r.target};
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "axis,value,pair,seed,source_nmi,source_ari,source_acc,target_nmi,target_ari,target_acc,"
         "diff_nmi,diff_ari,diff_acc\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const SweepRow& r : rows) {
    out << r.axis << ',' << r.value << ',' << r.pair << ',' << r.seed << ',' << num(r.source.nmi) << ','
        << num(r.source.ari) << ',' << num(r.source.acc) << ',' << num(r.target.nmi) << ','
        << num(r.target.ari) << ',' << num(r.target.acc) << ',' << num(r.source.nmi - r.target.nmi) << ','
        << num(r.source.ari - r.target.ari) << ',' << num(r.source.acc - r.target.acc) << '\n';
  }
  return out.str();
}

std::vector<ReportRow> aggregate(const std::vector<RunRecord>& records) {
  std::vector<ReportRow> rows;
  auto add = [](MetricsReport& acc, const MetricsReport& m) {
    acc.nmi += m.nmi;
    acc.ari += m.ari;
    acc.acc += m.acc;
  };
  for (const RunRecord& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& x) { return x.model == r.model; });
    if (it == rows.end()) {
      rows.push_back({r.model, 0, {}, {}, {}});
      it = rows.end() - 1;
    }
    ++it->runs;
    add(it->source, r.source);
    add(it->target, r.target);
    add(it->diff, r.diff());
  }
  for (ReportRow& row : rows) {
    const double n = static_cast<double>(row.runs);
    for (MetricsReport* m : {&row.source, &row.target, &row.diff}) {
      m->nmi /= n;
      m->ari /= n;
      m->acc /= n;
    }
  }
  return rows;
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %5s | %-20s | %-20s | %-20s\n", "model", "runs", "source NMI/ARI/ACC",
                "target NMI/ARI/ACC", "diff NMI/ARI/ACC");
  out << line;
  for (const ReportRow& r : rows) {
    std::snprintf(line, sizeof line,
                  "%-12s %5zu | %6.3f %6.3f %6.3f | %6.3f %6.3f %6.3f | %6.3f %6.3f %6.3f\n", r.model.c_str(),
                  r.runs, r.source.nmi, r.source.ari, r.source.acc, r.target.nmi, r.target.ari, r.target.acc,
                  r.diff.nmi, r.diff.ari, r.diff.acc);
    out << line;
  }
  return out.str();
}

namespace {

json rows_json(const Matrix& m) {
  json arr = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) arr.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return arr;
}

struct Projection {
  std::string method;
  std::vector<double> mean;
  Matrix components;  // 2 x b

  Matrix apply(const Matrix& m) const {
    Matrix out(m.rows(), 2);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t c = 0; c < m.cols(); ++c) out(i, a) += (m(i, c) - mean[c]) * components(a, c);
    return out;
  }
};

Projection fit_projection(const Matrix& z) {
  Projection p;
  const std::size_t b = z.cols();
  p.mean = column_means(z);
  p.components = Matrix(2, b);
  if (b <= 2) {
    p.method = "identity";
    std::fill(p.mean.begin(), p.mean.end(), 0.0);
    for (std::size_t a = 0; a < b; ++a) p.components(a, a) = 1.0;
    return p;
  }
  p.method = "pca";
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b));
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t a = 0; a < b; ++a)
      for (std::size_t c = 0; c < b; ++c)
        cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) +=
            (z(i, a) - p.mean[a]) * (z(i, c) - p.mean[c]);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the last two and fix the sign for reproducible plots.
  for (std::size_t a = 0; a < 2; ++a) {
    const Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(b - 1 - a));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg) < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < b; ++c) p.components(a, c) = sign * v(static_cast<Eigen::Index>(c));
  }
  return p;
}

}  // namespace

std::string centroid_trace_json(const Checkpoint& ckpt, const Matrix& x, std::size_t sample_limit) {
  const StackTrace trace = infer_trace(ckpt, x);
  const Matrix z = encode(ckpt.params.encoder, x);
  const Projection proj = fit_projection(z);
  const std::vector<int> labels = trace.labels();

  json blocks = json::array();
  for (std::size_t l = 0; l < trace.states.size(); ++l) {
    json b;
    b["block_index"] = trace.states[l].block_index;
    b["centroids"] = rows_json(trace.states[l].centroids);
    b["centroids_2d"] = rows_json(proj.apply(trace.states[l].centroids));
    if (l == 0) {
      b["cluster_sizes"] = nullptr;
      b["soft_mass"] = nullptr;
    } else {
      const Matrix& delta = trace.assignments[l - 1].delta;
      std::vector<long long> sizes(delta.cols(), 0);
      for (int lab : argmax_rows(delta)) ++sizes[static_cast<std::size_t>(lab)];
      std::vector<double> mass(delta.cols(), 0.0);
      for (std::size_t i = 0; i < delta.rows(); ++i)
        for (std::size_t j = 0; j < delta.cols(); ++j) mass[j] += delta(i, j);
      b["cluster_sizes"] = sizes;
      b["soft_mass"] = mass;
    }
    blocks.push_back(std::move(b));
  }

  const std::size_t stride = std::max<std::size_t>(1, (x.rows() + sample_limit - 1) / std::max<std::size_t>(1, sample_limit));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < x.rows(); i += stride) idx.push_back(i);
  const Matrix sample = proj.apply(select_rows(z, idx));
  std::vector<int> sample_labels;
  for (std::size_t i : idx) sample_labels.push_back(labels[i]);

  json j;
  j["format"] = "tdcm-centroid-trace";
  j["version"] = 1;
  j["config"] = json::object();
  for (const auto& [k, v] : ckpt.config.values()) j["config"][k] = v;
  j["num_samples"] = x.rows();
  j["embed_dim"] = z.cols();
  j["blocks"] = std::move(blocks);
  j["projection"] = {{"method", proj.method},
                     {"mean", proj.mean},
                     {"components", rows_json(proj.components)},
                     {"sample_indices", idx},
                     {"samples", rows_json(sample)},
                     {"sample_labels", sample_labels}};
  return j.dump(2);
}

}  // namespace tdcm
