#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmtl/inference.hpp"
#include "bmtl/model.hpp"
#include "bmtl/random.hpp"

namespace bmtl {

struct CVOptions {
  std::size_t repeats = 10;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // fold fits run concurrently; results do not depend on it
};

/// Per-task stratified fold labels. fold_of[t][i] is the validation fold of
/// sample i in task t, or -1 when the task is never held out.
struct FoldAssignment {
  std::vector<std::vector<int>> fold_of;
  std::vector<std::size_t> task_folds;  // effective fold count per task (0 = never held out)
};

/// Stratified assignment: within each task the samples are shuffled per
/// class, laid out class by class and dealt round-robin over
/// min(folds, n_t) folds. Tasks with fewer than two samples in some class
/// are never held out, which keeps both classes in every training split.
FoldAssignment stratified_folds(const MultitaskDataset& data, std::size_t folds, Rng& rng);

struct CVReport {
  std::vector<double> mean_loss;  // per candidate
  std::vector<double> std_loss;   // per candidate, over repeats x folds
  std::size_t selected = 0;
  std::size_t repeats = 0;
  std::size_t folds = 0;
  std::size_t evaluated_splits = 0;
  std::vector<std::size_t> task_folds;  // effective per-task fold counts
  std::vector<std::string> notes;       // fold reductions and skipped tasks
};

/// Predicts probabilities for rows of X in the given task.
using Predictor = std::function<Eigen::VectorXd(std::size_t task, const Eigen::MatrixXd& X)>;

/// Fits candidate `c` on a training split and returns its predictor.
using CandidateFitter = std::function<Predictor(std::size_t c, const MultitaskDataset& train)>;

/// Repeated stratified cross-validation scored by mean validation
/// cross-entropy. Every candidate sees the same splits; the candidate with
/// the lowest mean loss is selected, ties going to the earliest.
CVReport cross_validate(const MultitaskDataset& data, std::size_t num_candidates,
                        const CandidateFitter& fitter, const CVOptions& options);

/// Model selection over prior settings for the Bayesian model.
CVReport cross_validate(const MultitaskDataset& data, const std::vector<Hyperparameters>& grid,
                        const FitConfig& config, const CVOptions& options);

/// Rows of one task selected by a boolean mask.
TaskData subset_task(const TaskData& task, const std::vector<bool>& keep);

}  // namespace bmtl
