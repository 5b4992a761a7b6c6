#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bmtl/model.hpp"

namespace bmtl {

enum class InitMode { zeros, small_random };

struct FitConfig {
  int max_sweeps = 500;
  double elbo_rel_tol = 1e-6;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::zeros;

  void validate() const;
};

struct FitResult {
  VariationalState state;
  std::vector<double> elbo_trace;  // one surrogate ELBO value per sweep
  bool converged = false;
  int sweeps_run = 0;
};

/// The closed-form pieces of the surrogate ELBO, reported separately so each
/// can be checked on its own.
struct ElboTerms {
  double wishart = 0.0;         // prior + entropy terms of q(Sigma0^{-1})
  double beta = 0.0;            // prior + entropy terms of q(theta)
  double gaussian_prior = 0.0;  // -1/2 sum_j tr(v V (m m' + Sigma_j))
  double data = 0.0;            // label term plus the quadratic bound on E[-log(1 + e^s)]
  double gaussian_entropy = 0.0;
  double bernoulli_entropy = 0.0;

  double total() const noexcept {
    return wishart + beta + gaussian_prior + data + gaussian_entropy + bernoulli_entropy;
  }
};

/// Surrogate ELBO with the quadratic bound expanded around `reference`
/// (a T x d matrix standing for w' o z').
ElboTerms surrogate_elbo_terms(const VariationalState& state, const MultitaskDataset& data,
                               const Hyperparameters& hyper, const Eigen::MatrixXd& reference);

/// Surrogate ELBO expanded around the current means M o phi.
double surrogate_elbo(const VariationalState& state, const MultitaskDataset& data,
                      const Hyperparameters& hyper);

/// Surrogate ELBO with a frozen reference point.
double surrogate_elbo(const VariationalState& state, const MultitaskDataset& data,
                      const Hyperparameters& hyper, const Eigen::MatrixXd& reference);

/// -log(1 + exp(<wz, x>)) minus its quadratic lower bound around `ref`.
/// Non-negative up to rounding, zero when wz == ref or x == 0.
double quadratic_bound_gap(const Eigen::Ref<const Eigen::VectorXd>& wz,
                           const Eigen::Ref<const Eigen::VectorXd>& ref,
                           const Eigen::Ref<const Eigen::VectorXd>& x);

// Single-block coordinate updates. Each reads the state as given and
// returns the new block without modifying anything; predicted labels are
// recomputed from the state's current means.

/// Sigma_j = (v V + 1/4 diag_t(phi_j sum_i (x_t^ij)^2))^{-1}
Eigen::MatrixXd update_sigma_j(Eigen::Index j, const VariationalState& state,
                               const MultitaskDataset& data);

/// m_(j) = Sigma_j ( [phi_j sum_i (y - y~) x]_t + 1/4 [phi_j^2 sum_i x^2 m_tj]_t )
Eigen::VectorXd update_m_j(Eigen::Index j, const VariationalState& state,
                           const MultitaskDataset& data);

/// phi_j = sigmoid(psi(alpha) - psi(beta) + sum (y - y~) m x
///                 + 1/8 sum_t (m_tj^2 (2 phi_j - 1) - Sigma_j,tt) sum_i x^2),
/// clamped to [1e-12, 1 - 1e-12].
double update_phi_j(Eigen::Index j, const VariationalState& state, const MultitaskDataset& data);

struct BetaParams {
  double alpha;
  double beta;
};
BetaParams update_beta_params(const VariationalState& state, const Hyperparameters& hyper);

struct WishartParams {
  double v;
  Eigen::MatrixXd V;
};
WishartParams update_wishart_params(const VariationalState& state, const Hyperparameters& hyper);

/// Starting point of the coordinate ascent: phi = 1/2, Sigma_j = I,
/// alpha = alpha0 + d/2, beta = beta0 + d/2, v = v0 + d, V = V0 / (1 + d),
/// M = 0 or N(0, 0.01) entries depending on the init mode.
VariationalState initial_state(const MultitaskDataset& data, const Hyperparameters& hyper,
                               const FitConfig& config);

/// Stateful coordinate-ascent driver over one dataset.
///
/// Keeps the per-task linear predictors X_t (m_t o phi) up to date
/// incrementally, which is algebraically identical to recomputing the
/// predicted labels before every feature update.
class CaviEngine {
 public:
  CaviEngine(const MultitaskDataset& data, const Hyperparameters& hyper, VariationalState initial);

  void update_covariances();
  void update_mean(Eigen::Index j);
  void update_inclusion(Eigen::Index j);
  void update_beta();
  void update_wishart();

  /// One pass in the fixed order: all Sigma_j, every m_(j), every phi_j,
  /// then (alpha, beta) and (v, V).
  void sweep();

  double elbo() const;
  const VariationalState& state() const noexcept { return state_; }
  const MultitaskDataset& data() const noexcept { return data_; }

 private:
  void refresh_predictors();

  const MultitaskDataset& data_;
  const Hyperparameters& hyper_;
  VariationalState state_;
  Eigen::MatrixXd sq_norms_;             // T x d, sum_i (x_t^ij)^2
  std::vector<Eigen::VectorXd> eta_;     // per-task linear predictor of the current means
  Eigen::MatrixXd V0_inv_;
};

/// Runs coordinate ascent until the relative change of the surrogate ELBO
/// between consecutive sweeps falls below config.elbo_rel_tol or
/// config.max_sweeps is reached.
FitResult cavi_fit(const MultitaskDataset& data, const Hyperparameters& hyper,
                   const FitConfig& config = {});

}  // namespace bmtl
