#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bmtl {

/// One study: an n_t x d design matrix and its binary labels.
struct TaskData {
  std::string task_id;
  Eigen::MatrixXd design;  // n_t x d, column-major so feature columns are contiguous
  Eigen::VectorXd labels;  // n_t entries in {0, 1}
  std::vector<std::string> sample_ids;  // optional; empty or one per row

  Eigen::Index size() const noexcept { return labels.size(); }
};

/// Ordered collection of tasks sharing a d-dimensional feature space.
///
/// Validated on construction: every task has d columns, at least one sample,
/// binary labels and finite entries. Immutable afterwards.
class MultitaskDataset {
 public:
  MultitaskDataset(std::vector<TaskData> tasks, std::vector<std::string> feature_names = {});

  /// T tasks with no samples at all: the evidence-free dataset used to
  /// evaluate prior and entropy terms in isolation.
  static MultitaskDataset prior_only(std::size_t num_tasks, Eigen::Index feature_dim);

  const std::vector<TaskData>& tasks() const noexcept { return tasks_; }
  const TaskData& task(std::size_t t) const { return tasks_.at(t); }
  std::size_t num_tasks() const noexcept { return tasks_.size(); }
  Eigen::Index feature_dim() const noexcept { return feature_dim_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  Eigen::Index total_samples() const noexcept;

  /// Index of the task with the given id, if present.
  std::optional<std::size_t> find_task(const std::string& task_id) const;

  bool operator==(const MultitaskDataset& other) const;

 private:
  std::vector<TaskData> tasks_;
  Eigen::Index feature_dim_ = 0;
  std::vector<std::string> feature_names_;

  MultitaskDataset() = default;
};

/// Prior constants of the hierarchical model.
///   theta ~ Beta(alpha0, beta0), Sigma0^{-1} ~ Wishart(v0, V0).
struct Hyperparameters {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  double v0 = 3.0;
  Eigen::MatrixXd V0;

  /// Throws DomainError / ShapeError if the constants violate their
  /// constraints for `num_tasks` tasks.
  void validate(std::size_t num_tasks) const;

  /// Hyperparameters parameterized by prior inclusion ratio
  /// alpha0 / (alpha0 + beta0), concentration alpha0 + beta0, v0 and a
  /// scaled identity V0.
  static Hyperparameters from_ratio(double ratio, double concentration, double v0,
                                    double v0_scale, std::size_t num_tasks);
};

/// Parameters of the mean-field family
///   q(theta; alpha, beta) q(Sigma0^{-1}; v, V) prod_j q(z_j; phi_j) q(w_(j); m_(j), Sigma_j).
struct VariationalState {
  double alpha = 1.0;
  double beta = 1.0;
  double v = 1.0;
  Eigen::MatrixXd V;                   // T x T
  Eigen::VectorXd phi;                 // d
  Eigen::MatrixXd M;                   // T x d, column j is m_(j)
  std::vector<Eigen::MatrixXd> Sigmas;  // d matrices, T x T

  Eigen::Index num_tasks() const noexcept { return M.rows(); }
  Eigen::Index feature_dim() const noexcept { return M.cols(); }

  /// Posterior mean of w_t o z, i.e. M with column j scaled by phi_j.
  Eigen::MatrixXd effective_weights() const;

  /// Checks the invariants of the family (phi in [0,1], SPD blocks, ...).
  void validate() const;
};

/// A full draw of the latent variables of the generative model.
struct LatentSample {
  Eigen::MatrixXd W;           // T x d
  Eigen::VectorXd z;           // d entries in {0, 1}
  double theta = 0.5;          // in (0, 1)
  Eigen::MatrixXd Sigma0_inv;  // T x T SPD
};

/// Log joint density of labels and latents given the design matrices, up to
/// the additive constant that the closed form leaves out (Wishart and beta
/// normalizers are included exactly as written there).
double log_joint(const LatentSample& sample, const MultitaskDataset& data,
                 const Hyperparameters& hyper);

/// Gradient of log_joint with respect to W, holding z, theta and Sigma0 fixed.
Eigen::MatrixXd grad_log_joint_W(const LatentSample& sample, const MultitaskDataset& data,
                                 const Hyperparameters& hyper);

}  // namespace bmtl
