#include "bmtl/inference.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/normal_distribution.hpp>

#include "bmtl/errors.hpp"
#include "bmtl/linalg.hpp"
#include "bmtl/random.hpp"
#include "bmtl/special_functions.hpp"

namespace bmtl {

namespace {

constexpr double kPhiFloor = 1e-12;

double clamp_phi(double p) { return std::clamp(p, kPhiFloor, 1.0 - kPhiFloor); }

// -p log p - (1 - p) log(1 - p) with the limit 0 at the boundary.
double bernoulli_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

void check_state_against(const VariationalState& state, const MultitaskDataset& data) {
  if (state.num_tasks() != static_cast<Eigen::Index>(data.num_tasks()) ||
      state.feature_dim() != data.feature_dim()) {
    throw ShapeError("variational state does not match the dataset dimensions");
  }
  state.validate();
}

void check_feature_index(Eigen::Index j, const VariationalState& state) {
  if (j < 0 || j >= state.feature_dim()) throw ShapeError("feature index out of range");
}

// Sum_i (x_t^ij)^2 for every task and feature.
Eigen::MatrixXd squared_column_norms(const MultitaskDataset& data) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.num_tasks()), data.feature_dim());
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = data.task(t).design.colwise().squaredNorm();
  }
  return out;
}

// sum_i (y_t^i - sigmoid(eta_t^i)) x_t^ij for every task.
Eigen::VectorXd residual_correlation(Eigen::Index j, const MultitaskDataset& data,
                                     const std::vector<Eigen::VectorXd>& eta) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(data.num_tasks()));
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto& task = data.task(t);
    const auto col = task.design.col(j);
    const auto& e = eta[t];
    double acc = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) acc += (task.labels[i] - sigmoid(e[i])) * col[i];
    out[static_cast<Eigen::Index>(t)] = acc;
  }
  return out;
}

std::vector<Eigen::VectorXd> linear_predictors(const Eigen::MatrixXd& effective,
                                               const MultitaskDataset& data) {
  std::vector<Eigen::VectorXd> eta(data.num_tasks());
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    eta[t] = data.task(t).design * effective.row(static_cast<Eigen::Index>(t)).transpose();
  }
  return eta;
}

Eigen::MatrixXd sigma_update(Eigen::Index j, const VariationalState& state,
                             const Eigen::MatrixXd& sq_norms) {
  Eigen::MatrixXd precision = state.v * state.V;
  precision.diagonal() += 0.25 * state.phi[j] * sq_norms.col(j);
  return spd_inverse(precision);
}

Eigen::VectorXd mean_update(Eigen::Index j, const VariationalState& state,
                            const Eigen::MatrixXd& sq_norms, const Eigen::VectorXd& residual) {
  const double p = state.phi[j];
  const Eigen::VectorXd rhs =
      p * residual + 0.25 * p * p * sq_norms.col(j).cwiseProduct(state.M.col(j));
  return state.Sigmas[j] * rhs;
}

double inclusion_update(Eigen::Index j, const VariationalState& state,
                        const Eigen::MatrixXd& sq_norms, const Eigen::VectorXd& residual) {
  const double p = state.phi[j];
  const auto m = state.M.col(j);
  double a = digamma(state.alpha) - digamma(state.beta) + residual.dot(m);
  double curvature = 0.0;
  for (Eigen::Index t = 0; t < m.size(); ++t) {
    curvature += (m[t] * m[t] * (2.0 * p - 1.0) - state.Sigmas[j](t, t)) * sq_norms(t, j);
  }
  a += 0.125 * curvature;
  return clamp_phi(sigmoid(a));
}

Eigen::MatrixXd second_moment_sum(const VariationalState& state) {
  Eigen::MatrixXd acc = state.M * state.M.transpose();
  for (const auto& s : state.Sigmas) acc += s;
  return acc;
}

ElboTerms elbo_terms(const VariationalState& state, const MultitaskDataset& data,
                     const Hyperparameters& hyper, const Eigen::MatrixXd& reference,
                     const Eigen::MatrixXd& V0_inv) {
  const Eigen::Index T = state.num_tasks();
  const Eigen::Index d = state.feature_dim();
  const auto Td = static_cast<double>(T);
  const auto dd = static_cast<double>(d);
  const double v = state.v;

  ElboTerms terms;

  terms.wishart = -0.5 * v * (V0_inv * state.V).trace() +
                  0.5 * (hyper.v0 + dd) * spd_log_det(state.V) +
                  0.5 * (hyper.v0 + dd - v) * multivariate_digamma(0.5 * v, static_cast<int>(T)) +
                  0.5 * v * Td + multivariate_log_gamma(0.5 * v, static_cast<int>(T));

  const double phi_sum = state.phi.sum();
  const double a = state.alpha;
  const double b = state.beta;
  terms.beta = (hyper.alpha0 + phi_sum - a) * digamma(a) + log_beta(a, b) +
               (hyper.beta0 + dd - phi_sum - b) * digamma(b) +
               (a + b - dd - hyper.alpha0 - hyper.beta0) * digamma(a + b);

  terms.gaussian_prior = -0.5 * v * (state.V * second_moment_sum(state)).trace();

  // Per-feature variance of w_tj z_j under q, scaled by x^2 later:
  // phi ((1 - phi) m^2 + Sigma_j,tt).
  Eigen::MatrixXd variance(T, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double p = state.phi[j];
    for (Eigen::Index t = 0; t < T; ++t) {
      const double m = state.M(t, j);
      variance(t, j) = p * ((1.0 - p) * m * m + state.Sigmas[j](t, t));
    }
  }

  const Eigen::MatrixXd effective = state.effective_weights();
  double data_term = 0.0;
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    const auto& task = data.task(t);
    if (task.size() == 0) continue;
    const Eigen::VectorXd mu = task.design * effective.row(row).transpose();
    const Eigen::VectorXd ref = task.design * reference.row(row).transpose();
    const Eigen::VectorXd var = task.design.cwiseAbs2() * variance.row(row).transpose();
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      const double diff = mu[i] - ref[i];
      data_term += task.labels[i] * mu[i] - log1p_exp(ref[i]) - sigmoid(ref[i]) * diff -
                   0.125 * (diff * diff + var[i]);
    }
  }
  terms.data = data_term;

  double gauss_entropy = 0.0;
  double bern_entropy = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    gauss_entropy += 0.5 * spd_log_det(state.Sigmas[j]);
    bern_entropy += bernoulli_entropy(state.phi[j]);
  }
  terms.gaussian_entropy = gauss_entropy;
  terms.bernoulli_entropy = bern_entropy;
  return terms;
}

}  // namespace

void FitConfig::validate() const {
  if (max_sweeps < 1) throw DomainError("max_sweeps must be at least 1");
  if (!(elbo_rel_tol > 0.0)) throw DomainError("elbo_rel_tol must be positive");
}

ElboTerms surrogate_elbo_terms(const VariationalState& state, const MultitaskDataset& data,
                               const Hyperparameters& hyper, const Eigen::MatrixXd& reference) {
  check_state_against(state, data);
  hyper.validate(data.num_tasks());
  if (reference.rows() != state.num_tasks() || reference.cols() != state.feature_dim()) {
    throw ShapeError("reference point must be T x d");
  }
  return elbo_terms(state, data, hyper, reference, spd_inverse(hyper.V0));
}

double surrogate_elbo(const VariationalState& state, const MultitaskDataset& data,
                      const Hyperparameters& hyper) {
  return surrogate_elbo_terms(state, data, hyper, state.effective_weights()).total();
}

double surrogate_elbo(const VariationalState& state, const MultitaskDataset& data,
                      const Hyperparameters& hyper, const Eigen::MatrixXd& reference) {
  return surrogate_elbo_terms(state, data, hyper, reference).total();
}

double quadratic_bound_gap(const Eigen::Ref<const Eigen::VectorXd>& wz,
                           const Eigen::Ref<const Eigen::VectorXd>& ref,
                           const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (wz.size() != x.size() || ref.size() != x.size()) {
    throw ShapeError("quadratic_bound_gap: vectors must have equal length");
  }
  const double s = wz.dot(x);
  const double s_ref = ref.dot(x);
  const double diff = s - s_ref;
  const double bound = -log1p_exp(s_ref) - sigmoid(s_ref) * diff - 0.125 * diff * diff;
  return -log1p_exp(s) - bound;
}

Eigen::MatrixXd update_sigma_j(Eigen::Index j, const VariationalState& state,
                               const MultitaskDataset& data) {
  check_state_against(state, data);
  check_feature_index(j, state);
  Eigen::MatrixXd precision = state.v * state.V;
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    precision(row, row) += 0.25 * state.phi[j] * data.task(t).design.col(j).squaredNorm();
  }
  return spd_inverse(precision);
}

Eigen::VectorXd update_m_j(Eigen::Index j, const VariationalState& state,
                           const MultitaskDataset& data) {
  check_state_against(state, data);
  check_feature_index(j, state);
  const auto eta = linear_predictors(state.effective_weights(), data);
  return mean_update(j, state, squared_column_norms(data), residual_correlation(j, data, eta));
}

double update_phi_j(Eigen::Index j, const VariationalState& state, const MultitaskDataset& data) {
  check_state_against(state, data);
  check_feature_index(j, state);
  const auto eta = linear_predictors(state.effective_weights(), data);
  return inclusion_update(j, state, squared_column_norms(data), residual_correlation(j, data, eta));
}

BetaParams update_beta_params(const VariationalState& state, const Hyperparameters& hyper) {
  const double phi_sum = state.phi.sum();
  const auto d = static_cast<double>(state.phi.size());
  return {hyper.alpha0 + phi_sum, hyper.beta0 + d - phi_sum};
}

WishartParams update_wishart_params(const VariationalState& state, const Hyperparameters& hyper) {
  if (hyper.V0.rows() != state.num_tasks()) throw ShapeError("V0 must be T x T");
  const Eigen::MatrixXd precision = spd_inverse(hyper.V0) + second_moment_sum(state);
  return {hyper.v0 + static_cast<double>(state.feature_dim()), spd_inverse(precision)};
}

VariationalState initial_state(const MultitaskDataset& data, const Hyperparameters& hyper,
                               const FitConfig& config) {
  hyper.validate(data.num_tasks());
  const auto T = static_cast<Eigen::Index>(data.num_tasks());
  const Eigen::Index d = data.feature_dim();
  const auto dd = static_cast<double>(d);

  VariationalState s;
  s.alpha = hyper.alpha0 + 0.5 * dd;
  s.beta = hyper.beta0 + 0.5 * dd;
  s.v = hyper.v0 + dd;
  s.V = hyper.V0 / (1.0 + dd);
  s.phi = Eigen::VectorXd::Constant(d, 0.5);
  s.M = Eigen::MatrixXd::Zero(T, d);
  if (config.init_mode == InitMode::small_random) {
    auto rng = make_rng(config.seed, 0x1417);
    boost::random::normal_distribution<double> normal(0.0, 0.1);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index t = 0; t < T; ++t) s.M(t, j) = normal(rng);
    }
  }
  s.Sigmas.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Identity(T, T));
  return s;
}

CaviEngine::CaviEngine(const MultitaskDataset& data, const Hyperparameters& hyper,
                       VariationalState initial)
    : data_(data), hyper_(hyper), state_(std::move(initial)) {
  hyper_.validate(data_.num_tasks());
  check_state_against(state_, data_);
  sq_norms_ = squared_column_norms(data_);
  V0_inv_ = spd_inverse(hyper_.V0);
  refresh_predictors();
}

void CaviEngine::refresh_predictors() { eta_ = linear_predictors(state_.effective_weights(), data_); }

void CaviEngine::update_covariances() {
  for (Eigen::Index j = 0; j < state_.feature_dim(); ++j) {
    state_.Sigmas[static_cast<std::size_t>(j)] = sigma_update(j, state_, sq_norms_);
  }
}

void CaviEngine::update_mean(Eigen::Index j) {
  check_feature_index(j, state_);
  const Eigen::VectorXd residual = residual_correlation(j, data_, eta_);
  const Eigen::VectorXd updated = mean_update(j, state_, sq_norms_, residual);
  const Eigen::VectorXd delta = (updated - state_.M.col(j)) * state_.phi[j];
  state_.M.col(j) = updated;
  for (std::size_t t = 0; t < data_.num_tasks(); ++t) {
    const double step = delta[static_cast<Eigen::Index>(t)];
    if (step != 0.0) eta_[t] += step * data_.task(t).design.col(j);
  }
}

void CaviEngine::update_inclusion(Eigen::Index j) {
  check_feature_index(j, state_);
  const Eigen::VectorXd residual = residual_correlation(j, data_, eta_);
  const double updated = inclusion_update(j, state_, sq_norms_, residual);
  const double delta = updated - state_.phi[j];
  state_.phi[j] = updated;
  if (delta != 0.0) {
    for (std::size_t t = 0; t < data_.num_tasks(); ++t) {
      const double step = delta * state_.M(static_cast<Eigen::Index>(t), j);
      if (step != 0.0) eta_[t] += step * data_.task(t).design.col(j);
    }
  }
}

void CaviEngine::update_beta() {
  const auto p = update_beta_params(state_, hyper_);
  state_.alpha = p.alpha;
  state_.beta = p.beta;
}

void CaviEngine::update_wishart() {
  const Eigen::MatrixXd precision = V0_inv_ + second_moment_sum(state_);
  state_.v = hyper_.v0 + static_cast<double>(state_.feature_dim());
  state_.V = spd_inverse(precision);
}

void CaviEngine::sweep() {
  // Rebuild the cached predictors once per sweep so incremental updates
  // cannot accumulate rounding drift.
  refresh_predictors();
  update_covariances();
  for (Eigen::Index j = 0; j < state_.feature_dim(); ++j) update_mean(j);
  for (Eigen::Index j = 0; j < state_.feature_dim(); ++j) update_inclusion(j);
  update_beta();
  update_wishart();
}

double CaviEngine::elbo() const {
  return elbo_terms(state_, data_, hyper_, state_.effective_weights(), V0_inv_).total();
}

FitResult cavi_fit(const MultitaskDataset& data, const Hyperparameters& hyper,
                   const FitConfig& config) {
  config.validate();
  if (data.total_samples() == 0) throw DomainError("cavi_fit: dataset has no samples");
  CaviEngine engine(data, hyper, initial_state(data, hyper, config));

  FitResult result;
  result.elbo_trace.reserve(static_cast<std::size_t>(std::min(config.max_sweeps, 4096)));
  for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
    engine.sweep();
    const double value = engine.elbo();
    if (!std::isfinite(value)) throw DomainError("cavi_fit: surrogate ELBO became non-finite");
    result.elbo_trace.push_back(value);
    result.sweeps_run = sweep + 1;
    if (result.elbo_trace.size() >= 2) {
      const double previous = result.elbo_trace[result.elbo_trace.size() - 2];
      if (std::abs(value - previous) < config.elbo_rel_tol * std::abs(previous)) {
        result.converged = true;
        break;
      }
    }
  }
  result.state = engine.state();
  return result;
}

}  // namespace bmtl
