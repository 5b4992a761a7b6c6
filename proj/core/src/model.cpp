#include "bmtl/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "bmtl/errors.hpp"
#include "bmtl/linalg.hpp"
#include "bmtl/special_functions.hpp"

namespace bmtl {

MultitaskDataset::MultitaskDataset(std::vector<TaskData> tasks,
                                   std::vector<std::string> feature_names)
    : tasks_(std::move(tasks)), feature_names_(std::move(feature_names)) {
  if (tasks_.empty()) throw ShapeError("dataset must contain at least one task");
  feature_dim_ = tasks_.front().design.cols();
  if (feature_dim_ < 1) throw ShapeError("dataset feature dimension must be positive");
  if (!feature_names_.empty() && static_cast<Eigen::Index>(feature_names_.size()) != feature_dim_) {
    throw ShapeError("feature_names length does not match the feature dimension");
  }
  for (const auto& task : tasks_) {
    if (task.design.cols() != feature_dim_) {
      throw ShapeError("task '" + task.task_id + "' has " + std::to_string(task.design.cols()) +
                       " columns, expected " + std::to_string(feature_dim_));
    }
    if (task.design.rows() != task.labels.size()) {
      throw ShapeError("task '" + task.task_id + "': design rows and label count differ");
    }
    if (!task.sample_ids.empty() && static_cast<Eigen::Index>(task.sample_ids.size()) != task.size()) {
      throw ShapeError("task '" + task.task_id + "': sample id count differs from row count");
    }
    if (task.size() < 1) throw ShapeError("task '" + task.task_id + "' has no samples");
    for (Eigen::Index i = 0; i < task.labels.size(); ++i) {
      const double y = task.labels[i];
      if (y != 0.0 && y != 1.0) {
        throw DomainError("task '" + task.task_id + "': labels must be 0 or 1");
      }
    }
    if (!task.design.allFinite()) {
      throw DomainError("task '" + task.task_id + "': design matrix has non-finite entries");
    }
  }
}

MultitaskDataset MultitaskDataset::prior_only(std::size_t num_tasks, Eigen::Index feature_dim) {
  if (num_tasks < 1 || feature_dim < 1) throw ShapeError("prior_only: T and d must be positive");
  MultitaskDataset ds;
  ds.feature_dim_ = feature_dim;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    ds.tasks_.push_back(TaskData{"task" + std::to_string(t), Eigen::MatrixXd(0, feature_dim),
                                 Eigen::VectorXd(0), {}});
  }
  return ds;
}

Eigen::Index MultitaskDataset::total_samples() const noexcept {
  return std::accumulate(tasks_.begin(), tasks_.end(), Eigen::Index{0},
                         [](Eigen::Index acc, const TaskData& t) { return acc + t.size(); });
}

std::optional<std::size_t> MultitaskDataset::find_task(const std::string& task_id) const {
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    if (tasks_[t].task_id == task_id) return t;
  }
  return std::nullopt;
}

bool MultitaskDataset::operator==(const MultitaskDataset& other) const {
  if (feature_dim_ != other.feature_dim_ || feature_names_ != other.feature_names_ ||
      tasks_.size() != other.tasks_.size()) {
    return false;
  }
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    const auto& a = tasks_[t];
    const auto& b = other.tasks_[t];
    if (a.task_id != b.task_id || a.design.rows() != b.design.rows() || a.design != b.design ||
        a.labels != b.labels) {
      return false;
    }
  }
  return true;
}

void Hyperparameters::validate(std::size_t num_tasks) const {
  const auto T = static_cast<Eigen::Index>(num_tasks);
  if (!(alpha0 > 0.0) || !(beta0 > 0.0)) throw DomainError("alpha0 and beta0 must be positive");
  if (V0.rows() != T || V0.cols() != T) {
    throw ShapeError("V0 must be " + std::to_string(T) + "x" + std::to_string(T));
  }
  if (!(v0 > static_cast<double>(T) - 1.0)) throw DomainError("v0 must exceed T - 1");
  if (!is_symmetric(V0, 1e-12)) throw DomainError("V0 must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(V0);
  if (llt.info() != Eigen::Success) throw DomainError("V0 must be positive definite");
}

Hyperparameters Hyperparameters::from_ratio(double ratio, double concentration, double v0,
                                            double v0_scale, std::size_t num_tasks) {
  if (!(ratio > 0.0 && ratio < 1.0) || !(concentration > 0.0) || !(v0_scale > 0.0)) {
    throw DomainError("from_ratio: ratio in (0,1), positive concentration and V0 scale required");
  }
  const auto T = static_cast<Eigen::Index>(num_tasks);
  return Hyperparameters{ratio * concentration, (1.0 - ratio) * concentration, v0,
                         v0_scale * Eigen::MatrixXd::Identity(T, T)};
}

Eigen::MatrixXd VariationalState::effective_weights() const {
  return M * phi.asDiagonal();
}

void VariationalState::validate() const {
  const Eigen::Index T = M.rows();
  const Eigen::Index d = M.cols();
  if (phi.size() != d || static_cast<Eigen::Index>(Sigmas.size()) != d || V.rows() != T ||
      V.cols() != T) {
    throw ShapeError("variational state has inconsistent shapes");
  }
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("alpha and beta must be positive");
  if (!(v > static_cast<double>(T) - 1.0)) throw DomainError("v must exceed T - 1");
  // SPD up to a Cholesky jitter of at most 1e-8 of the mean diagonal.
  const auto require_spd = [](const Eigen::MatrixXd& a, const char* what) {
    if (!is_symmetric(a, 1e-12)) throw DomainError(std::string(what) + " must be symmetric");
    const auto chol = cholesky_with_jitter(a);
    if (chol.jitter > 1e-8 * std::abs(a.trace()) / static_cast<double>(a.rows())) {
      throw DomainError(std::string(what) + " must be positive definite");
    }
  };
  require_spd(V, "V");
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(phi[j] >= 0.0 && phi[j] <= 1.0)) throw DomainError("phi entries must lie in [0, 1]");
    if (Sigmas[j].rows() != T || Sigmas[j].cols() != T) throw ShapeError("Sigma_j must be T x T");
    require_spd(Sigmas[j], "Sigma_j");
  }
  if (!M.allFinite()) throw DomainError("variational means must be finite");
}

namespace {

void check_sample_shapes(const LatentSample& s, const MultitaskDataset& data,
                         const Hyperparameters& hyper) {
  const auto T = static_cast<Eigen::Index>(data.num_tasks());
  const Eigen::Index d = data.feature_dim();
  if (s.W.rows() != T || s.W.cols() != d) throw ShapeError("W must be T x d");
  if (s.z.size() != d) throw ShapeError("z must have d entries");
  if (s.Sigma0_inv.rows() != T || s.Sigma0_inv.cols() != T) {
    throw ShapeError("Sigma0_inv must be T x T");
  }
  if (hyper.V0.rows() != T || hyper.V0.cols() != T) throw ShapeError("V0 must be T x T");
  if (!(s.theta > 0.0 && s.theta < 1.0)) throw DomainError("theta must lie in (0, 1)");
}

}  // namespace

double log_joint(const LatentSample& sample, const MultitaskDataset& data,
                 const Hyperparameters& hyper) {
  check_sample_shapes(sample, data, hyper);
  const auto T = static_cast<double>(data.num_tasks());
  const auto d = static_cast<double>(data.feature_dim());
  const Eigen::MatrixXd& precision = sample.Sigma0_inv;

  const double logdet_precision = strict_spd_log_det(precision);
  const double logdet_V0 = strict_spd_log_det(hyper.V0);
  const Eigen::MatrixXd V0_inv = spd_inverse(hyper.V0);

  double value = -0.5 * (V0_inv * precision).trace();
  value += 0.5 * (hyper.v0 + d - T - 1.0) * logdet_precision;
  value -= 0.5 * hyper.v0 * logdet_V0;

  const double log_theta = std::log(sample.theta);
  const double log_1m_theta = std::log1p(-sample.theta);
  value += (hyper.alpha0 - 1.0) * log_theta + (hyper.beta0 - 1.0) * log_1m_theta;
  value += log_gamma(hyper.alpha0 + hyper.beta0) - log_gamma(hyper.alpha0) - log_gamma(hyper.beta0);

  // sum_j w_(j)' Sigma0^{-1} w_(j) = tr(W' P W)
  value -= 0.5 * (sample.W.transpose() * precision * sample.W).trace();

  const Eigen::MatrixXd masked = sample.W * sample.z.asDiagonal();
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto& task = data.task(t);
    const Eigen::VectorXd eta = task.design * masked.row(static_cast<Eigen::Index>(t)).transpose();
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      value += task.labels[i] * eta[i] - log1p_exp(eta[i]);
    }
  }

  const double active = sample.z.sum();
  value += active * log_theta + (d - active) * log_1m_theta;
  return value;
}

Eigen::MatrixXd grad_log_joint_W(const LatentSample& sample, const MultitaskDataset& data,
                                 const Hyperparameters& hyper) {
  check_sample_shapes(sample, data, hyper);
  Eigen::MatrixXd grad = -sample.Sigma0_inv * sample.W;
  const Eigen::MatrixXd masked = sample.W * sample.z.asDiagonal();
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto& task = data.task(t);
    const auto row = static_cast<Eigen::Index>(t);
    Eigen::VectorXd residual = task.design * masked.row(row).transpose();
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
      residual[i] = task.labels[i] - sigmoid(residual[i]);
    }
    grad.row(row) += (task.design.transpose() * residual).cwiseProduct(sample.z).transpose();
  }
  return grad;
}

}  // namespace bmtl
