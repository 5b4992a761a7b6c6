#include "bmtl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>

#include <Eigen/Eigenvalues>

#include "bmtl/errors.hpp"
#include "bmtl/special_functions.hpp"

namespace bmtl {

namespace {

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ShapeError("design rows and labels differ in length");
  if (y.size() == 0) throw DomainError("no samples");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DomainError("labels must be 0 or 1");
  }
  const double pos = y.sum();
  if (pos == 0.0 || pos == static_cast<double>(y.size())) {
    throw DomainError("L1 logistic regression needs both classes");
  }
}

double smooth_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                   double b) {
  const Eigen::VectorXd s = (X * w).array() + b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) total += log1p_exp(s[i]) - y[i] * s[i];
  return total / static_cast<double>(y.size());
}

// Gradient of the mean loss; returns the intercept component separately.
double smooth_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                   double b, Eigen::VectorXd& gw) {
  const Eigen::VectorXd s = (X * w).array() + b;
  const Eigen::VectorXd r = s.unaryExpr([](double e) { return sigmoid(e); }) - y;
  const double n = static_cast<double>(y.size());
  gw = X.transpose() * r / n;
  return r.sum() / n;
}

// Lipschitz constant of the mean-loss gradient in (w, b).
double lipschitz(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A << X, Eigen::VectorXd::Ones(X.rows());
  const Eigen::MatrixXd gram = A.transpose() * A;
  const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                         .eigenvalues()
                         .maxCoeff();
  return std::max(0.25 * top / static_cast<double>(X.rows()), 1e-12);
}

}  // namespace

double soft_threshold(double u, double k) noexcept {
  const double mag = std::abs(u) - k;
  if (mag <= 0.0) return 0.0;
  return u > 0.0 ? mag : -mag;
}

double l1_logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w, double b, double lambda) {
  return smooth_loss(X, y, w, b) + lambda * w.lpNorm<1>();
}

double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  check_inputs(X, y);
  const Eigen::VectorXd centred = y.array() - y.mean();
  return (X.transpose() * centred).cwiseAbs().maxCoeff() / static_cast<double>(y.size());
}

Eigen::VectorXd L1LogisticModel::predict_proba(const Eigen::MatrixXd& X) const {
  if (X.cols() != weights.size()) throw ShapeError("design matrix must have d columns");
  Eigen::VectorXd s = (X * weights).array() + intercept;
  return s.unaryExpr([](double e) { return sigmoid(e); });
}

L1LogisticModel fit_l1_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                                const L1Config& config) {
  check_inputs(X, y);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be >= 0");
  if (config.max_iterations < 1 || !(config.rel_tol > 0.0)) {
    throw DomainError("invalid L1 solver configuration");
  }

  const Eigen::Index d = X.cols();
  const double ybar = y.mean();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = std::log(ybar / (1.0 - ybar));
  double objective = l1_logistic_objective(X, y, w, b, lambda);

  const double base_step = 1.0 / lipschitz(X);
  double step = base_step;
  Eigen::VectorXd gw(d);
  Eigen::VectorXd w_new(d);

  // Extrapolated point for FISTA; equals (w, b) in plain mode.
  Eigen::VectorXd w_prev = w;
  double b_prev = b;
  double momentum = 1.0;

  L1LogisticModel model;
  model.lambda = lambda;
  model.objective_trace.push_back(objective);

  for (int it = 0; it < config.max_iterations; ++it) {
    Eigen::VectorXd yw = w;
    double yb = b;
    double next_momentum = 1.0;
    if (config.accelerate) {
      next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      const double beta = (momentum - 1.0) / next_momentum;
      yw = w + beta * (w - w_prev);
      yb = b + beta * (b - b_prev);
    }

    const double f_y = smooth_loss(X, y, yw, yb);
    const double gb = smooth_grad(X, y, yw, yb, gw);

    // Backtracking on the quadratic upper model; a 1/L step always passes.
    step = std::min(step * 2.0, base_step * 1e3);
    double b_new = yb;
    for (;;) {
      for (Eigen::Index j = 0; j < d; ++j) w_new[j] = soft_threshold(yw[j] - step * gw[j], step * lambda);
      b_new = yb - step * gb;
      const Eigen::VectorXd dw = w_new - yw;
      const double db = b_new - yb;
      const double model_value =
          f_y + gw.dot(dw) + gb * db + (dw.squaredNorm() + db * db) / (2.0 * step);
      if (smooth_loss(X, y, w_new, b_new) <= model_value + 1e-15 * std::abs(f_y)) break;
      step *= 0.5;
      if (step < base_step * 1e-6) break;
    }

    const double candidate = l1_logistic_objective(X, y, w_new, b_new, lambda);
    if (candidate > objective) {
      if (config.accelerate && momentum > 1.0) {
        // Restart: the next step is a plain proximal step from the iterate.
        momentum = 1.0;
        w_prev = w;
        b_prev = b;
        continue;
      }
      // Rounding floor reached; the current iterate is the answer.
      model.converged = true;
      break;
    }
    w_prev = w;
    b_prev = b;
    w = w_new;
    b = b_new;
    momentum = next_momentum;

    const double previous = objective;
    objective = candidate;
    model.objective_trace.push_back(objective);
    if (std::abs(previous - objective) <= config.rel_tol * std::max(std::abs(previous), 1e-300)) {
      model.converged = true;
      break;
    }
  }

  if (!w.allFinite() || !std::isfinite(b)) throw DomainError("L1 solver diverged");
  model.weights = std::move(w);
  model.intercept = b;
  model.iterations = static_cast<int>(model.objective_trace.size()) - 1;
  return model;
}

std::vector<double> default_lambda_grid(const MultitaskDataset& data, std::size_t count,
                                        double ratio) {
  if (count < 1 || !(ratio > 0.0 && ratio <= 1.0)) throw DomainError("invalid lambda grid request");
  double top = 0.0;
  for (const auto& task : data.tasks()) {
    const double pos = task.labels.sum();
    if (pos == 0.0 || pos == static_cast<double>(task.size())) continue;
    top = std::max(top, lambda_max(task.design, task.labels));
  }
  if (top == 0.0) throw DomainError("no task has both classes");
  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    grid[k] = top * std::pow(ratio, frac);
  }
  return grid;
}

namespace {

// Fits `task` for every grid value under CV and refits the winner on all rows.
L1LogisticModel select_and_fit(const TaskData& task, const std::vector<double>& grid,
                               const BaselineConfig& config, std::vector<CVReport>& reports) {
  std::size_t chosen = 0;
  const double positives = task.labels.sum();
  const double negatives = static_cast<double>(task.size()) - positives;
  if (grid.size() > 1 && std::min(positives, negatives) < 2.0) {
    // No stratified split keeps both classes in training; take the middle penalty.
    CVReport report;
    report.selected = grid.size() / 2;
    report.notes.push_back("task " + task.task_id +
                           ": fewer than two samples in a class, penalty not cross-validated");
    reports.push_back(std::move(report));
    chosen = reports.back().selected;
  } else if (grid.size() > 1) {
    const MultitaskDataset single({task});
    const CandidateFitter fitter = [&](std::size_t c, const MultitaskDataset& train) -> Predictor {
      auto model = std::make_shared<L1LogisticModel>(
          fit_l1_logistic(train.task(0).design, train.task(0).labels, grid[c], config.solver));
      return [model](std::size_t, const Eigen::MatrixXd& X) { return model->predict_proba(X); };
    };
    reports.push_back(cross_validate(single, grid.size(), fitter, config.cv));
    chosen = reports.back().selected;
  }
  return fit_l1_logistic(task.design, task.labels, grid[chosen], config.solver);
}

}  // namespace

StlFit fit_stl(const MultitaskDataset& data, const std::vector<double>& lambda_grid,
               const BaselineConfig& config) {
  if (lambda_grid.empty()) throw DomainError("lambda grid is empty");
  StlFit out;
  for (const auto& task : data.tasks()) {
    auto model = select_and_fit(task, lambda_grid, config, out.reports);
    model.scope = TaskScope::single;
    model.task_id = task.task_id;
    out.models.push_back(std::move(model));
  }
  return out;
}

TaskData pool_tasks(const MultitaskDataset& data) {
  TaskData pooled{"pooled", Eigen::MatrixXd(data.total_samples(), data.feature_dim()),
                  Eigen::VectorXd(data.total_samples()), {}};
  Eigen::Index row = 0;
  for (const auto& task : data.tasks()) {
    pooled.design.middleRows(row, task.size()) = task.design;
    pooled.labels.segment(row, task.size()) = task.labels;
    row += task.size();
  }
  return pooled;
}

PooledFit fit_pooled(const MultitaskDataset& data, const std::vector<double>& lambda_grid,
                     const BaselineConfig& config) {
  if (lambda_grid.empty()) throw DomainError("lambda grid is empty");
  PooledFit out;
  out.model = select_and_fit(pool_tasks(data), lambda_grid, config, out.reports);
  out.model.scope = TaskScope::pooled;
  return out;
}

Eigen::MatrixXd stacked_weights(const std::vector<L1LogisticModel>& models, std::size_t num_tasks) {
  if (models.empty()) throw ShapeError("no models");
  const Eigen::Index d = models.front().weights.size();
  Eigen::MatrixXd W(static_cast<Eigen::Index>(num_tasks), d);
  if (models.size() == 1 && models.front().scope == TaskScope::pooled) {
    W.rowwise() = models.front().weights.transpose();
    return W;
  }
  if (models.size() != num_tasks) throw ShapeError("need one model per task");
  for (std::size_t t = 0; t < num_tasks; ++t) W.row(static_cast<Eigen::Index>(t)) = models[t].weights.transpose();
  return W;
}

}  // namespace bmtl
