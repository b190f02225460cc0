#pragma once

// Experiment orchestration shared by the CLI and the acceptance harness:
// seeded domain pairs, TDCM and baseline runs, sweeps, aggregation and
// centroid traces.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdcm/config.hpp"
#include "tdcm/datagen.hpp"
#include "tdcm/trainer.hpp"

namespace tdcm {

DomainSpec domain_spec_from(const ExperimentConfig& cfg, std::size_t pair_index);
std::uint64_t target_seed_for(const ExperimentConfig& cfg, std::size_t pair_index);
DomainPair make_pair(const ExperimentConfig& cfg, std::size_t pair_index);

RunRecord run_tdcm(const ExperimentConfig& cfg, const Domain& source, const Domain& target,
                   Checkpoint* checkpoint = nullptr);

// Fits the configured baseline on the source with `baseline_restarts`
// k-means++ restarts (best inertia), then labels the target with the frozen
// source centroids.
RunRecord run_baseline(const ExperimentConfig& cfg, const Domain& source, const Domain& target);

// Runs fn(0..count-1) on up to `jobs` threads. The first exception is
// rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

struct SweepRow {
  std::string axis;
  std::string value;
  std::size_t pair = 0;
  std::uint64_t seed = 0;
  MetricsReport source;
  MetricsReport target;
};

// Axis names: tau, L, alpha-mode, beta, perturbation.
std::string sweep_axis_key(const std::string& axis);
std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            const std::vector<std::string>& values, std::size_t jobs);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct ReportRow {
  std::string model;
  std::size_t runs = 0;
  MetricsReport source;
  MetricsReport target;
  MetricsReport diff;
};

std::vector<ReportRow> aggregate(const std::vector<RunRecord>& records);
std::string format_report(const std::vector<ReportRow>& rows);

// Per-block centroids and cluster sizes plus a 2-D projection for plotting.
std::string centroid_trace_json(const Checkpoint& ckpt, const Matrix& x, std::size_t sample_limit = 500);

}  // namespace tdcm
