#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmtl/crossval.hpp"
#include "bmtl/model.hpp"

namespace bmtl {

struct L1Config {
  int max_iterations = 20000;
  double rel_tol = 1e-8;
  bool accelerate = false;  // FISTA with a monotone safeguard
};

enum class TaskScope { single, pooled };

/// L1-penalized logistic regression: weights, unpenalized intercept and the
/// penalty used to fit them.
struct L1LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double lambda = 0.0;
  TaskScope scope = TaskScope::single;
  std::string task_id;                 // empty for pooled models
  std::vector<double> objective_trace;  // objective after every accepted step
  int iterations = 0;                   // accepted steps
  bool converged = false;

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const;
};

/// sign(u) * max(|u| - k, 0)
double soft_threshold(double u, double k) noexcept;

/// mean_i log(1 + e^{s_i}) - y_i s_i + lambda ||w||_1 with s = X w + b.
double l1_logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w, double b, double lambda);

/// Smallest penalty that zeroes every weight: max_j |X_j' (y - ybar)| / n.
double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Proximal gradient with backtracking, started from w = 0, b = logit(ybar).
L1LogisticModel fit_l1_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                                const L1Config& config = {});

/// `count` log-spaced penalties from the largest per-task lambda_max down
/// to `ratio` times it.
std::vector<double> default_lambda_grid(const MultitaskDataset& data, std::size_t count = 10,
                                        double ratio = 0.01);

struct BaselineConfig {
  CVOptions cv;
  L1Config solver;
};

struct StlFit {
  std::vector<L1LogisticModel> models;  // one per task
  std::vector<CVReport> reports;        // empty when the grid has one value
};

struct PooledFit {
  L1LogisticModel model;
  std::vector<CVReport> reports;
};

/// Independent per-task fits, each selecting its own penalty by CV.
StlFit fit_stl(const MultitaskDataset& data, const std::vector<double>& lambda_grid,
               const BaselineConfig& config = {});

/// One fit on the rows of every task stacked together.
PooledFit fit_pooled(const MultitaskDataset& data, const std::vector<double>& lambda_grid,
                     const BaselineConfig& config = {});

/// Rows of every task stacked in task order.
TaskData pool_tasks(const MultitaskDataset& data);

/// T x d matrix of per-task weights; a pooled model repeats its weights.
Eigen::MatrixXd stacked_weights(const std::vector<L1LogisticModel>& models, std::size_t num_tasks);

}  // namespace bmtl
