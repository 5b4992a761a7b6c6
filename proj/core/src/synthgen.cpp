#include "bmtl/synthgen.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/negative_binomial_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "bmtl/errors.hpp"
#include "bmtl/linalg.hpp"
#include "bmtl/random.hpp"
#include "bmtl/special_functions.hpp"

namespace bmtl {

namespace {

constexpr double kBalancedRate = 24.0;
constexpr int kNegBinStops = 1;
constexpr double kNegBinSuccess = 0.04;
constexpr int kImbalancedScale = 6;
constexpr int kMinTaskSize = 2;
constexpr int kMaxLabelAttempts = 100;

// Independent streams for the individual pieces of a scenario, so that
// changing e.g. the task count does not perturb the support draw.
enum Stream : std::uint64_t { kSupport = 1, kWeights = 2, kTaskBase = 1000 };

}  // namespace

void Scenario::validate() const {
  if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("scenario theta must lie in (0, 1]");
  if (d < 1 || T < 1) throw DomainError("scenario needs d >= 1 and T >= 1");
  if (Sigma0) {
    if (Sigma0->rows() != static_cast<Eigen::Index>(T) || Sigma0->cols() != Sigma0->rows()) {
      throw ShapeError("scenario Sigma0 must be T x T");
    }
  }
}

std::vector<Scenario> list_scenarios() {
  const double thetas[] = {0.8, 0.2, 0.05};
  std::vector<Scenario> out;
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) {
      Scenario s;
      s.name = "dataset" + std::to_string(b * 3 + k + 1);
      s.theta = thetas[k];
      s.balance = b == 0 ? Balance::balanced : Balance::imbalanced;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::optional<Scenario> find_scenario(const std::string& name) {
  for (auto& s : list_scenarios()) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

SyntheticData generate(const Scenario& scenario) {
  scenario.validate();
  const Eigen::Index d = scenario.d;
  const auto T = static_cast<Eigen::Index>(scenario.T);

  GroundTruth truth;
  truth.theta0 = scenario.theta;
  truth.Sigma0 = scenario.Sigma0.value_or(Eigen::MatrixXd::Identity(T, T));
  const Eigen::MatrixXd L = cholesky_with_jitter(truth.Sigma0).llt.matrixL();

  {
    auto rng = make_rng(scenario.seed, kSupport);
    boost::random::bernoulli_distribution<double> coin(scenario.theta);
    truth.z0.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) truth.z0[j] = coin(rng) ? 1.0 : 0.0;
  }
  {
    auto rng = make_rng(scenario.seed, kWeights);
    boost::random::normal_distribution<double> normal;
    truth.W0.resize(T, d);
    Eigen::VectorXd eps(T);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index t = 0; t < T; ++t) eps[t] = normal(rng);
      truth.W0.col(j) = L * eps;
    }
  }

  const Eigen::MatrixXd effective = truth.effective_weights();
  std::vector<TaskData> tasks;
  tasks.reserve(scenario.T);
  for (Eigen::Index t = 0; t < T; ++t) {
    auto rng = make_rng(scenario.seed, kTaskBase + static_cast<std::uint64_t>(t));
    int n = 0;
    if (scenario.balance == Balance::balanced) {
      boost::random::poisson_distribution<int, double> poisson(kBalancedRate);
      do n = poisson(rng); while (n < kMinTaskSize);
    } else {
      boost::random::negative_binomial_distribution<int, double> negbin(kNegBinStops,
                                                                          kNegBinSuccess);
      do n = kImbalancedScale * negbin(rng); while (n < kMinTaskSize);
    }

    TaskData task;
    task.task_id = "task" + std::to_string(t + 1);
    task.design.resize(n, d);
    boost::random::normal_distribution<double> normal;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (int i = 0; i < n; ++i) task.design(i, j) = normal(rng);
    }
    const Eigen::VectorXd eta = task.design * effective.row(t).transpose();
    task.labels.resize(n);
    bool both = false;
    for (int attempt = 0; attempt < kMaxLabelAttempts && !both; ++attempt) {
      for (int i = 0; i < n; ++i) {
        task.labels[i] = boost::random::bernoulli_distribution<double>(sigmoid(eta[i]))(rng) ? 1.0 : 0.0;
      }
      const double positives = task.labels.sum();
      both = positives > 0.0 && positives < static_cast<double>(n);
    }
    if (!both) {
      throw GenerationError(scenario.name + ": task " + task.task_id + " (n=" + std::to_string(n) +
                            ") still single-class after " + std::to_string(kMaxLabelAttempts) +
                            " label draws");
    }
    tasks.push_back(std::move(task));
  }

  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) names.push_back("f" + std::to_string(j + 1));
  return {MultitaskDataset(std::move(tasks), std::move(names)), std::move(truth)};
}

}  // namespace bmtl
