#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bmtl/baselines.hpp"
#include "bmtl/crossval.hpp"
#include "bmtl/dataio.hpp"
#include "bmtl/inference.hpp"
#include "bmtl/metrics.hpp"
#include "bmtl/synthgen.hpp"

namespace bmtl {

enum class Method { bayes_mtl, stl_lc, pooled_lc };

inline constexpr std::array<Method, 3> kAllMethods = {Method::bayes_mtl, Method::stl_lc,
                                                      Method::pooled_lc};

std::string method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

/// One prior setting: inclusion ratio alpha0 / (alpha0 + beta0),
/// concentration alpha0 + beta0, V0 = v0_scale * I and v0 (T + 2 when unset).
struct HyperCandidate {
  double ratio = 0.05;
  double concentration = 2.0;
  double v0_scale = 1.0;
  std::optional<double> v0;

  Hyperparameters materialize(std::size_t num_tasks) const;
  std::string label() const;
};

/// ratio {0.05, 0.2, 0.5} x concentration {2, 20} x V0 {I, 0.1 I}.
std::vector<HyperCandidate> default_hyper_grid();

/// Parses "ratio:concentration:v0_scale[:v0],..." .
std::vector<HyperCandidate> parse_hyper_grid(const std::string& text);

struct FitOptions {
  Method method = Method::bayes_mtl;
  std::vector<HyperCandidate> hyper_grid = default_hyper_grid();
  FitConfig fit;
  CVOptions cv;
  L1Config solver;
  std::vector<double> lambda_grid;  // empty: default_lambda_grid(data, lambda_count, lambda_ratio)
  std::size_t lambda_count = 10;
  double lambda_ratio = 0.01;
};

struct FitOutcome {
  ModelArchive archive;
  std::vector<CVReport> reports;            // one for Bayes, one per task (STL), one (pooled)
  std::vector<std::string> candidate_labels;  // hyperparameter or lambda labels
  std::size_t selected = 0;                 // index into candidate_labels (Bayes / pooled)
};

/// Selects hyperparameters by cross-validation and refits on all the data.
FitOutcome fit_model(const MultitaskDataset& data, const FitOptions& options,
                     const Preprocessing& preprocessing = {});

struct RecoveryReport {
  MetricSet support;
  double cosine_distance = 0.0;  // NaN when either weight matrix is all zero
  double sparsity_ratio = 0.0;
};

/// Support recovery of the selected features and weight recovery of the
/// effective weights against the generating values.
RecoveryReport score_recovery(const ModelArchive& model, const GroundTruth& truth);

struct PredictionReport {
  MetricSet overall;
  std::vector<MetricSet> per_task;
  std::vector<std::string> task_ids;
  double cross_entropy = 0.0;
};

/// Classification metrics of plug-in predictions thresholded at 0.5.
PredictionReport score_predictions(const ModelArchive& model, const MultitaskDataset& data);

struct BenchmarkOptions {
  std::vector<std::string> scenarios;  // empty: all six presets
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  FitOptions fit;  // method field is ignored
  std::size_t threads = 1;
};

struct BenchmarkCell {
  std::string scenario;
  Method method = Method::bayes_mtl;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RecoveryReport recovery;
};

/// Every (scenario, method, seed) cell, run on a bounded worker pool and
/// returned in that lexicographic order regardless of scheduling. Failures
/// are recorded in the cell instead of aborting the run.
std::vector<BenchmarkCell> run_benchmark(const BenchmarkOptions& options);

/// One row per cell with every metric.
std::string benchmark_cells_csv(const std::vector<BenchmarkCell>& cells);

/// One row per (scenario, method): "mean (std)" per metric over the seeds
/// that succeeded.
std::string benchmark_summary_csv(const std::vector<BenchmarkCell>& cells);

/// Worker count from the BMTL_THREADS environment variable, else 1.
std::size_t default_thread_count();

}  // namespace bmtl
