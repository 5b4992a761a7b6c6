#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmtl/model.hpp"

namespace bmtl {

enum class Balance { balanced, imbalanced };

/// One synthetic benchmark configuration.
///
/// Balanced tasks draw n_t ~ Poisson(24); imbalanced tasks draw
/// n_t = 6 * NegBin(r = 1, p = 0.04) (failures before the first success).
/// Both resample until n_t >= 2.
struct Scenario {
  std::string name;
  double theta = 0.05;
  Balance balance = Balance::balanced;
  Eigen::Index d = 100;
  std::size_t T = 10;
  std::uint64_t seed = 0;
  /// Task covariance of the generating weights; identity when unset.
  std::optional<Eigen::MatrixXd> Sigma0;

  void validate() const;
};

/// Generator-side latent values for recovery scoring.
struct GroundTruth {
  Eigen::MatrixXd W0;  // T x d
  Eigen::VectorXd z0;  // d, binary
  double theta0 = 0.0;
  Eigen::MatrixXd Sigma0;

  /// W0 with every column j scaled by z0_j.
  Eigen::MatrixXd effective_weights() const { return W0 * z0.asDiagonal(); }
};

struct SyntheticData {
  MultitaskDataset dataset;
  GroundTruth truth;
};

/// The six presets: dataset1..3 balanced with theta 0.8 / 0.2 / 0.05 and
/// dataset4..6 imbalanced with the same theta sequence.
std::vector<Scenario> list_scenarios();

/// Preset by name ("dataset1".."dataset6"); nullopt for unknown names.
std::optional<Scenario> find_scenario(const std::string& name);

/// Draws z0, W0, task sizes, designs x ~ N(0, I) and labels
/// y ~ Bernoulli(sigmoid(<w_t o z, x>)). Labels of a task are redrawn until
/// both classes occur, at most 100 times, after which GenerationError is
/// thrown. Deterministic given scenario.seed.
SyntheticData generate(const Scenario& scenario);

}  // namespace bmtl
