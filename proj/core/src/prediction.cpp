#include "bmtl/prediction.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include "bmtl/errors.hpp"
#include "bmtl/linalg.hpp"
#include "bmtl/random.hpp"
#include "bmtl/special_functions.hpp"

namespace bmtl {

namespace {

constexpr std::size_t kDrawChunk = 256;

void check_task_design(const VariationalState& state, std::size_t task, const Eigen::MatrixXd& X) {
  if (task >= static_cast<std::size_t>(state.num_tasks())) {
    throw ShapeError("task index out of range");
  }
  if (X.cols() != state.feature_dim()) throw ShapeError("design matrix must have d columns");
}

// Lower Cholesky factor of Sigma_j; an all-zero covariance gives a zero factor.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& sigma) {
  if (sigma.cwiseAbs().maxCoeff() == 0.0) return Eigen::MatrixXd::Zero(sigma.rows(), sigma.cols());
  return cholesky_with_jitter(sigma).llt.matrixL();
}

}  // namespace

Eigen::VectorXd predict_proba(const VariationalState& state, std::size_t task,
                              const Eigen::MatrixXd& X) {
  check_task_design(state, task, X);
  const Eigen::VectorXd w =
      state.M.row(static_cast<Eigen::Index>(task)).transpose().cwiseProduct(state.phi);
  Eigen::VectorXd eta = X * w;
  return eta.unaryExpr([](double e) { return sigmoid(e); });
}

Eigen::VectorXd predict_proba(const FitResult& model, std::size_t task, const Eigen::MatrixXd& X) {
  return predict_proba(model.state, task, X);
}

PosteriorDraws sample_posterior(const VariationalState& state, std::size_t num_draws,
                                std::uint64_t seed) {
  if (num_draws < 1) throw DomainError("sample_posterior: need at least one draw");
  const Eigen::Index T = state.num_tasks();
  const Eigen::Index d = state.feature_dim();

  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(static_cast<std::size_t>(d));
  for (const auto& s : state.Sigmas) factors.push_back(covariance_factor(s));

  PosteriorDraws out;
  out.seed = seed;
  out.W.resize(num_draws);
  out.z.resize(num_draws);
  out.theta.resize(num_draws);

  boost::random::normal_distribution<double> normal;
  boost::random::beta_distribution<double> beta(state.alpha, state.beta);
  Eigen::VectorXd eps(T);
  for (std::size_t begin = 0; begin < num_draws; begin += kDrawChunk) {
    auto rng = make_rng(seed, begin / kDrawChunk);
    const std::size_t end = std::min(num_draws, begin + kDrawChunk);
    for (std::size_t s = begin; s < end; ++s) {
      Eigen::MatrixXd W(T, d);
      Eigen::VectorXd z(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index t = 0; t < T; ++t) eps[t] = normal(rng);
        W.col(j) = state.M.col(j) + factors[static_cast<std::size_t>(j)] * eps;
        const double p = state.phi[j];
        // bernoulli_distribution requires p in [0, 1]; p == 1 always yields 1.
        z[j] = boost::random::bernoulli_distribution<double>(p)(rng) ? 1.0 : 0.0;
      }
      out.W[s] = std::move(W);
      out.z[s] = std::move(z);
      out.theta[s] = beta(rng);
    }
  }
  return out;
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("empirical_quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("empirical_quantile: q must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<ProbabilityInterval> predict_proba_interval(const VariationalState& state,
                                                        std::size_t task,
                                                        const Eigen::MatrixXd& X,
                                                        std::size_t num_draws, double level,
                                                        std::uint64_t seed, PointEstimate point) {
  check_task_design(state, task, X);
  if (!(level > 0.0 && level < 1.0)) throw DomainError("credible level must lie in (0, 1)");
  const auto draws = sample_posterior(state, num_draws, seed);
  const auto row = static_cast<Eigen::Index>(task);

  // probs(i, s) = sigmoid(<w_t^(s) o z^(s), x_i>)
  Eigen::MatrixXd probs(X.rows(), static_cast<Eigen::Index>(num_draws));
  for (std::size_t s = 0; s < num_draws; ++s) {
    const Eigen::VectorXd w = draws.W[s].row(row).transpose().cwiseProduct(draws.z[s]);
    probs.col(static_cast<Eigen::Index>(s)) =
        (X * w).unaryExpr([](double e) { return sigmoid(e); });
  }

  const Eigen::VectorXd plug_in = predict_proba(state, task, X);
  const double tail = 0.5 * (1.0 - level);
  std::vector<ProbabilityInterval> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  std::vector<double> sample(num_draws);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (std::size_t s = 0; s < num_draws; ++s) sample[s] = probs(i, static_cast<Eigen::Index>(s));
    const double centre = point == PointEstimate::plug_in ? plug_in[i] : probs.row(i).mean();
    out.push_back({empirical_quantile(sample, tail), centre, empirical_quantile(sample, 1.0 - tail)});
  }
  return out;
}

Eigen::VectorXd importance_vector(const Eigen::Ref<const Eigen::VectorXd>& w,
                                  const Eigen::Ref<const Eigen::VectorXd>& z,
                                  const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (w.size() != x.size() || z.size() != x.size()) {
    throw ShapeError("importance_vector: vectors must have equal length");
  }
  Eigen::VectorXd contrib = w.cwiseProduct(z).cwiseProduct(x).cwiseAbs();
  const double norm = contrib.norm();
  if (norm == 0.0 || !std::isfinite(norm)) return Eigen::VectorXd::Zero(x.size());
  return contrib / norm;
}

ImportanceReport feature_importance(const VariationalState& state, const MultitaskDataset& data,
                                    std::size_t num_draws, std::uint64_t seed) {
  if (state.feature_dim() != data.feature_dim() ||
      state.num_tasks() != static_cast<Eigen::Index>(data.num_tasks())) {
    throw ShapeError("feature_importance: model and data dimensions differ");
  }
  const auto draws = sample_posterior(state, num_draws, seed);
  const Eigen::Index d = state.feature_dim();

  ImportanceReport report;
  report.per_sample.resize(data.num_tasks());
  std::vector<std::vector<double>> by_feature(static_cast<std::size_t>(d));
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto& task = data.task(t);
    const auto row = static_cast<Eigen::Index>(t);
    report.per_sample[t].reserve(static_cast<std::size_t>(task.size()));
    for (Eigen::Index i = 0; i < task.size(); ++i) {
      Eigen::MatrixXd rows(static_cast<Eigen::Index>(num_draws), d);
      for (std::size_t s = 0; s < num_draws; ++s) {
        const Eigen::VectorXd w = draws.W[s].row(row).transpose();
        rows.row(static_cast<Eigen::Index>(s)) =
            importance_vector(w, draws.z[s], task.design.row(i).transpose()).transpose();
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        auto& bucket = by_feature[static_cast<std::size_t>(j)];
        for (Eigen::Index s = 0; s < rows.rows(); ++s) bucket.push_back(rows(s, j));
      }
      report.per_sample[t].push_back(std::move(rows));
    }
  }

  report.summary.reserve(static_cast<std::size_t>(d));
  for (auto& bucket : by_feature) {
    if (bucket.empty()) {
      report.summary.push_back({0.0, 0.0, 0.0, 0.0});
      continue;
    }
    double mean = 0.0;
    for (double v : bucket) mean += v;
    mean /= static_cast<double>(bucket.size());
    report.summary.push_back({mean, empirical_quantile(bucket, 0.05),
                              empirical_quantile(bucket, 0.5), empirical_quantile(bucket, 0.95)});
  }
  return report;
}

Eigen::MatrixXd sparsity_coefficients(const VariationalState& state, std::size_t num_draws,
                                      std::uint64_t seed, TaskAggregation aggregation) {
  const auto draws = sample_posterior(state, num_draws, seed);
  const Eigen::Index d = state.feature_dim();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(num_draws), d);
  for (std::size_t s = 0; s < num_draws; ++s) {
    const Eigen::MatrixXd magnitude = draws.W[s].cwiseAbs();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double agg = aggregation == TaskAggregation::max_abs ? magnitude.col(j).maxCoeff()
                                                                 : magnitude.col(j).mean();
      out(static_cast<Eigen::Index>(s), j) = draws.z[s][j] * agg;
    }
  }
  return out;
}

}  // namespace bmtl
