#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bmtl/inference.hpp"
#include "bmtl/model.hpp"

namespace bmtl {

/// Independent draws from the factorized variational posterior.
struct PosteriorDraws {
  std::vector<Eigen::MatrixXd> W;  // S matrices, T x d
  std::vector<Eigen::VectorXd> z;  // S binary d-vectors
  std::vector<double> theta;       // S values
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return theta.size(); }
};

/// Plug-in predictive probabilities sigmoid(<m_t o phi, x>) for task `task`.
Eigen::VectorXd predict_proba(const VariationalState& state, std::size_t task,
                              const Eigen::MatrixXd& X);
Eigen::VectorXd predict_proba(const FitResult& model, std::size_t task, const Eigen::MatrixXd& X);

/// w_(j) ~ N(m_(j), Sigma_j), z_j ~ Bernoulli(phi_j), theta ~ Beta(alpha, beta).
/// Deterministic given the seed; draws come in fixed-size chunks with their
/// own derived streams so the result does not depend on evaluation order.
PosteriorDraws sample_posterior(const VariationalState& state, std::size_t num_draws,
                                std::uint64_t seed);

enum class PointEstimate { plug_in, monte_carlo_mean };

struct ProbabilityInterval {
  double lower;
  double point;
  double upper;
};

/// Central `level` credible band of sigmoid(<w_t o z, x>) over `num_draws`
/// posterior draws, for each row of X.
std::vector<ProbabilityInterval> predict_proba_interval(
    const VariationalState& state, std::size_t task, const Eigen::MatrixXd& X,
    std::size_t num_draws, double level, std::uint64_t seed,
    PointEstimate point = PointEstimate::plug_in);

/// Per-feature relative contribution |w_j z_j x_j| / ||w o z o x||_2 to the
/// log-odds. Returns the zero vector when every contribution vanishes.
Eigen::VectorXd importance_vector(const Eigen::Ref<const Eigen::VectorXd>& w,
                                  const Eigen::Ref<const Eigen::VectorXd>& z,
                                  const Eigen::Ref<const Eigen::VectorXd>& x);

struct FeatureSummary {
  double mean;
  double q05;
  double q50;
  double q95;
};

struct ImportanceReport {
  /// per_sample[t][i] is an S x d matrix: one importance vector per draw
  /// for sample i of task t.
  std::vector<std::vector<Eigen::MatrixXd>> per_sample;
  /// Aggregate over every (task, sample, draw) triple, one entry per feature.
  std::vector<FeatureSummary> summary;
};

ImportanceReport feature_importance(const VariationalState& state, const MultitaskDataset& data,
                                    std::size_t num_draws, std::uint64_t seed);

enum class TaskAggregation { max_abs, mean_abs };

/// S x d matrix with entry z_j^(s) * agg_t |w_tj^(s)|; max over tasks by
/// default, mean over tasks optionally.
Eigen::MatrixXd sparsity_coefficients(const VariationalState& state, std::size_t num_draws,
                                      std::uint64_t seed,
                                      TaskAggregation aggregation = TaskAggregation::max_abs);

/// Linear-interpolation empirical quantile of an unsorted sample.
double empirical_quantile(std::vector<double> values, double q);

}  // namespace bmtl
