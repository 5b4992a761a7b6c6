#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Cholesky>

#include "bmtl/errors.hpp"
#include "bmtl/inference.hpp"
#include "bmtl/special_functions.hpp"
#include "inference_checks.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace bmtl;

namespace {

Hyperparameters simple_hyper(std::size_t T) {
  Hyperparameters h;
  h.v0 = static_cast<double>(T) + 2.0;
  h.V0 = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(T));
  return h;
}

// Literal transcription of one sweep: every block through the stand-alone
// update functions, predicted labels recomputed from scratch each time.
VariationalState literal_sweep(VariationalState q, const MultitaskDataset& data, const Hyperparameters& h,
                               std::vector<Eigen::Index> order = {}) {
  if (order.empty()) {
    for (Eigen::Index j = 0; j < q.feature_dim(); ++j) order.push_back(j);
  }
  for (Eigen::Index j : order) q.Sigmas[static_cast<std::size_t>(j)] = update_sigma_j(j, q, data);
  for (Eigen::Index j : order) q.M.col(j) = update_m_j(j, q, data);
  for (Eigen::Index j : order) q.phi(j) = update_phi_j(j, q, data);
  const auto ab = update_beta_params(q, h);
  q.alpha = ab.alpha;
  q.beta = ab.beta;
  const auto w = update_wishart_params(q, h);
  q.v = w.v;
  q.V = w.V;
  return q;
}

double max_diff(const VariationalState& a, const VariationalState& b) {
  double d = std::max({std::abs(a.alpha - b.alpha), std::abs(a.beta - b.beta), std::abs(a.v - b.v),
                       (a.V - b.V).cwiseAbs().maxCoeff(), (a.phi - b.phi).cwiseAbs().maxCoeff(),
                       (a.M - b.M).cwiseAbs().maxCoeff()});
  for (std::size_t j = 0; j < a.Sigmas.size(); ++j) d = std::max(d, (a.Sigmas[j] - b.Sigmas[j]).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

TEST_CASE("surrogate ELBO matches the term-by-term evaluation") {
  instances::Gen g(101);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t T = 1 + rep % 3;
    const Eigen::Index d = 1 + rep % 5;
    const auto data = instances::random_dataset(g, T, d, 2, 8);
    const auto h = instances::random_hyper(g, T);
    const auto q = instances::random_state(g, T, d);
    const Eigen::MatrixXd ref = q.effective_weights() + 0.3 * Eigen::MatrixXd::Random(q.num_tasks(), d);
    CHECK(surrogate_elbo(q, data, h, ref) == doctest::Approx(oracle::surrogate_elbo(q, data, h, ref)).epsilon(1e-10));
    CHECK(surrogate_elbo(q, data, h) ==
          doctest::Approx(oracle::surrogate_elbo(q, data, h, q.effective_weights())).epsilon(1e-10));
    const auto terms = surrogate_elbo_terms(q, data, h, ref);
    CHECK(terms.data == doctest::Approx(oracle::surrogate_data_term(q, data, ref)).epsilon(1e-10));
  }
}

TEST_CASE("surrogate ELBO without data") {
  // d = 1, T = 1: only prior and entropy terms remain.
  const auto data = MultitaskDataset::prior_only(1, 1);
  Hyperparameters h;
  h.alpha0 = 2.0;
  h.beta0 = 3.0;
  h.v0 = 2.5;
  h.V0 = Eigen::MatrixXd::Constant(1, 1, 0.7);
  VariationalState q;
  q.alpha = 1.5;
  q.beta = 2.5;
  q.v = 3.0;
  q.V = Eigen::MatrixXd::Constant(1, 1, 0.4);
  q.phi = Eigen::VectorXd::Constant(1, 0.3);
  q.M = Eigen::MatrixXd::Constant(1, 1, 0.8);
  q.Sigmas = {Eigen::MatrixXd::Constant(1, 1, 0.6)};
  const double v = 3.0, V = 0.4, a = 1.5, b = 2.5, p = 0.3, m = 0.8, S = 0.6;
  double expect = -0.5 * v * V / 0.7 + 0.5 * (2.5 + 1) * std::log(V) + 0.5 * (2.5 + 1 - v) * oracle::digamma(v / 2) +
                  v / 2 + oracle::log_gamma(v / 2);
  expect += (2.0 + p - a) * oracle::digamma(a) + oracle::log_gamma(a) + oracle::log_gamma(b) - oracle::log_gamma(a + b);
  expect += (3.0 + 1 - p - b) * oracle::digamma(b) + (a + b - 1 - 5.0) * oracle::digamma(a + b);
  expect += -0.5 * v * V * (m * m + S);
  expect += 0.5 * std::log(S) - p * std::log(p) - (1 - p) * std::log(1 - p);
  CHECK(surrogate_elbo(q, data, h) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("Bernoulli entropy is d ln 2 at phi = 1/2") {
  instances::Gen g(103);
  const auto data = instances::random_dataset(g, 2, 4, 3, 5);
  const auto h = simple_hyper(2);
  auto q = instances::random_state(g, 2, 4);
  q.phi.setConstant(0.5);
  CHECK(surrogate_elbo_terms(q, data, h, q.effective_weights()).bernoulli_entropy ==
        doctest::Approx(4 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("surrogate data term bounds the Monte Carlo expectation") {
  instances::Gen g(107);
  const auto data = instances::random_dataset(g, 2, 3, 5, 5);
  auto q = instances::random_state(g, 2, 3);
  const auto exact_term = [&](const VariationalState& s, int draws, double& se) {
    std::mt19937_64 r(5);
    std::normal_distribution<double> n01;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
    for (const auto& S : s.Sigmas) chol.emplace_back(S);
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < draws; ++k) {
      Eigen::MatrixXd W(2, 3);
      Eigen::VectorXd z(3);
      for (int j = 0; j < 3; ++j) {
        Eigen::Vector2d e(n01(r), n01(r));
        W.col(j) = s.M.col(j) + Eigen::MatrixXd(chol[static_cast<std::size_t>(j)].matrixL()) * e;
        z(j) = std::uniform_real_distribution<double>(0, 1)(r) < s.phi(j) ? 1.0 : 0.0;
      }
      double val = 0.0;
      for (int t = 0; t < 2; ++t) {
        const auto& task = data.task(static_cast<std::size_t>(t));
        const Eigen::VectorXd eta = task.design * W.row(t).transpose().cwiseProduct(z);
        for (Eigen::Index i = 0; i < eta.size(); ++i) val += task.labels(i) * eta(i) - log1p_exp(eta(i));
      }
      sum += val;
      sum2 += val * val;
    }
    const double mean = sum / draws;
    se = std::sqrt((sum2 / draws - mean * mean) / draws);
    return mean;
  };
  SUBCASE("bound holds") {
    double se = 0.0;
    const double mc = exact_term(q, 1000000, se);
    const double bound = oracle::surrogate_data_term(q, data, q.effective_weights());
    CHECK(surrogate_elbo_terms(q, data, simple_hyper(2), q.effective_weights()).data ==
          doctest::Approx(bound).epsilon(1e-12));
    CHECK(mc + 3 * se >= bound);
  }
  SUBCASE("tight for a degenerate posterior") {
    for (auto& S : q.Sigmas) S = 1e-18 * Eigen::MatrixXd::Identity(2, 2);
    q.phi << 1.0, 0.0, 1.0;
    double se = 0.0;
    const double mc = exact_term(q, 1000, se);
    const double bound = surrogate_elbo_terms(q, data, simple_hyper(2), q.effective_weights()).data;
    CHECK(std::abs(mc - bound) <= 3 * se + 1e-9);
  }
}

TEST_CASE("quadratic bound gap") {
  std::mt19937_64 r(9);
  std::normal_distribution<double> n(0.0, 2.0);
  const auto vec = [&] {
    Eigen::VectorXd v(5);
    for (int k = 0; k < 5; ++k) v(k) = n(r);
    return v;
  };
  for (int k = 0; k < 100; ++k) {
    const auto wz = vec(), ref = vec(), x = vec();
    CHECK(quadratic_bound_gap(wz, ref, x) >= -1e-12);
    CHECK(std::abs(quadratic_bound_gap(ref, ref, x)) <= 1e-12);
    CHECK(quadratic_bound_gap(wz, ref, Eigen::VectorXd::Zero(5)) == 0.0);
  }
  CHECK_THROWS_AS(quadratic_bound_gap(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)),
                  ShapeError);
}

TEST_CASE("covariance update") {
  // vV = I and X~_j = diag(8, 8): (I + I * 8 / 4)^{-1} = I / 3.
  TaskData a{"a", Eigen::MatrixXd::Constant(2, 1, 2.0), Eigen::Vector2d(1, 0), {}};
  TaskData b{"b", Eigen::MatrixXd::Constant(2, 1, -2.0), Eigen::Vector2d(0, 1), {}};
  const MultitaskDataset data({a, b});
  VariationalState q;
  q.v = 2.0;
  q.V = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  q.phi = Eigen::VectorXd::Ones(1);
  q.M = Eigen::MatrixXd::Zero(2, 1);
  q.Sigmas = {Eigen::MatrixXd::Identity(2, 2)};
  CHECK(update_sigma_j(0, q, data).isApprox(Eigen::MatrixXd::Identity(2, 2) / 3.0, 1e-15));
  q.phi(0) = 0.0;
  CHECK(update_sigma_j(0, q, data).isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-15));
  CHECK_THROWS_AS(update_sigma_j(1, q, data), ShapeError);
}

TEST_CASE("mean update") {
  instances::Gen g(109);
  const auto data = instances::random_dataset(g, 2, 3, 4, 6);
  auto q = instances::random_state(g, 2, 3);
  SUBCASE("switched-off feature") {
    q.phi(1) = 0.0;
    CHECK(update_m_j(1, q, data).isZero(0.0));
  }
  SUBCASE("symmetric data fixed point") {
    // Each row appears once with each label, so sum_i (y - 1/2) x vanishes.
    std::vector<TaskData> tasks;
    for (int t = 0; t < 2; ++t) {
      Eigen::MatrixXd X(4, 2);
      X << 1.0, 0.5, 1.0, 0.5, -2.0, 1.0, -2.0, 1.0;
      tasks.push_back({"t" + std::to_string(t), X, Eigen::Vector4d(1, 0, 1, 0), {}});
    }
    const MultitaskDataset sym(tasks);
    auto s = instances::random_state(g, 2, 2);
    s.M.setZero();
    CHECK(update_m_j(0, s, sym).isZero(1e-15));
  }
  SUBCASE("one task, one feature: stationary point of the quadratic surrogate") {
    TaskData t{"a", Eigen::Vector3d(0.5, -1.2, 2.0), Eigen::Vector3d(1, 0, 1), {}};
    const MultitaskDataset one({t});
    const auto h = simple_hyper(1);
    VariationalState s;
    s.alpha = s.beta = 2.0;
    s.v = 3.0;
    s.V = Eigen::MatrixXd::Constant(1, 1, 0.3);
    s.phi = Eigen::VectorXd::Constant(1, 0.7);
    s.M = Eigen::MatrixXd::Constant(1, 1, 0.4);
    s.Sigmas = {Eigen::MatrixXd::Identity(1, 1)};
    s.Sigmas[0] = update_sigma_j(0, s, one);
    const Eigen::MatrixXd ref = s.effective_weights();
    // The surrogate is quadratic in m; three evaluations pin down its vertex.
    const auto f = [&](double m) {
      auto x = s;
      x.M(0, 0) = m;
      return oracle::surrogate_elbo(x, one, h, ref);
    };
    const double f0 = f(-1.0), f1 = f(0.0), f2 = f(1.0);
    const double vertex = 0.5 * (f0 - f2) / (f0 - 2 * f1 + f2);
    CHECK(update_m_j(0, s, one)(0) == doctest::Approx(vertex).epsilon(1e-8));
  }
}

TEST_CASE("inclusion update") {
  const auto data = MultitaskDataset({TaskData{"a", Eigen::MatrixXd::Zero(2, 1), Eigen::Vector2d(1, 0), {}}});
  VariationalState q;
  q.alpha = q.beta = 2.0;
  q.v = 3.0;
  q.V = Eigen::MatrixXd::Identity(1, 1);
  q.phi = Eigen::VectorXd::Constant(1, 0.3);
  q.M = Eigen::MatrixXd::Zero(1, 1);
  q.Sigmas = {Eigen::MatrixXd::Identity(1, 1)};
  CHECK(update_phi_j(0, q, data) == doctest::Approx(0.5).epsilon(1e-15));
  q.alpha = 100.0;
  q.beta = 1.0;
  const double p = update_phi_j(0, q, data);
  CHECK(p == doctest::Approx(sigmoid(oracle::digamma(100.0) - oracle::digamma(1.0))).epsilon(1e-14));
  CHECK(p > 0.98);
  q.alpha = 1e-3;
  q.beta = 1e3;
  const double low = update_phi_j(0, q, data);
  CHECK(low > 0.0);
  CHECK(low < 1.0);
}

TEST_CASE("beta and Wishart updates") {
  Hyperparameters h;
  h.alpha0 = h.beta0 = 1.0;
  h.v0 = 3.0;
  h.V0 = Eigen::MatrixXd::Identity(1, 1);
  VariationalState q;
  q.phi = Eigen::Vector3d(1.0, 1.0, 0.5);
  q.M = Eigen::MatrixXd::Zero(1, 3);
  q.Sigmas.assign(3, Eigen::MatrixXd::Identity(1, 1));
  auto ab = update_beta_params(q, h);
  CHECK(ab.alpha == 3.5);
  CHECK(ab.beta == 1.5);
  q.phi.setZero();
  ab = update_beta_params(q, h);
  CHECK(ab.alpha == 1.0);
  CHECK(ab.beta == 4.0);
  q.phi.setOnes();
  ab = update_beta_params(q, h);
  CHECK(ab.alpha == 4.0);
  CHECK(ab.beta == 1.0);

  VariationalState w;
  w.phi = Eigen::VectorXd::Ones(1);
  w.M = Eigen::MatrixXd::Constant(1, 1, 2.0);
  w.Sigmas = {Eigen::MatrixXd::Identity(1, 1)};
  const auto wp = update_wishart_params(w, h);
  CHECK(wp.v == 4.0);
  CHECK(wp.V(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  instances::Gen g(113);
  auto h2 = instances::random_hyper(g, 2);
  VariationalState z;
  z.phi = Eigen::Vector2d(0.5, 0.5);
  z.M = Eigen::MatrixXd::Zero(2, 2);
  z.Sigmas.assign(2, Eigen::MatrixXd::Zero(2, 2));
  const auto zp = update_wishart_params(z, h2);
  CHECK(zp.v == h2.v0 + 2.0);
  CHECK(zp.V.isApprox(h2.V0, 1e-12));
}

TEST_CASE("closed-form updates match numerical block maximizers") {
  instances::Gen g(127);
  for (int rep = 0; rep < 10; ++rep) {
    const auto e = checks::update_oracle_errors(g);
    CHECK(e.sigma < 1e-6);
    CHECK(e.mean < 1e-6);
    CHECK(e.phi < 1e-6);
    CHECK(e.beta < 1e-6);
    CHECK(e.wishart < 1e-6);
  }
}

TEST_CASE("no single update lowers the frozen-reference surrogate") {
  instances::Gen g(131);
  for (int rep = 0; rep < 10; ++rep) CHECK(checks::worst_update_decrease(g, 3) <= 1e-8);
}

TEST_CASE("incremental predictors reproduce the literal sweep") {
  instances::Gen g(137);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t T = 1 + rep % 3;
    const Eigen::Index d = 2 + rep % 4;
    const auto data = instances::random_dataset(g, T, d, 3, 10);
    const auto h = instances::random_hyper(g, T);
    auto q = initial_state(data, h, FitConfig{});
    q.M = Eigen::MatrixXd::Random(q.num_tasks(), d);
    CaviEngine engine(data, h, q);
    for (int s = 0; s < 4; ++s) {
      engine.sweep();
      q = literal_sweep(q, data, h);
      CHECK(max_diff(engine.state(), q) < 1e-10);
    }
  }
}

TEST_CASE("sweep is equivariant under feature permutation") {
  // Features are visited sequentially, so a sweep over permuted columns
  // equals a sweep over the original columns visited in permuted order.
  instances::Gen g(139);
  for (int rep = 0; rep < 5; ++rep) {
    const auto data = instances::random_dataset(g, 2, 4, 4, 8);
    const auto h = instances::random_hyper(g, 2);
    auto q = initial_state(data, h, FitConfig{});
    q.M = Eigen::MatrixXd::Random(2, 4);
    const std::vector<Eigen::Index> perm = {2, 0, 3, 1};
    std::vector<TaskData> tasks;
    for (const auto& t : data.tasks()) {
      TaskData p = t;
      for (int j = 0; j < 4; ++j) p.design.col(j) = t.design.col(perm[static_cast<std::size_t>(j)]);
      tasks.push_back(p);
    }
    const MultitaskDataset permuted(tasks);
    auto qp = q;
    for (int j = 0; j < 4; ++j) {
      const auto src = perm[static_cast<std::size_t>(j)];
      qp.M.col(j) = q.M.col(src);
      qp.phi(j) = q.phi(src);
      qp.Sigmas[static_cast<std::size_t>(j)] = q.Sigmas[static_cast<std::size_t>(src)];
    }
    CaviEngine b(permuted, h, qp);
    b.sweep();
    const auto a = literal_sweep(q, data, h, perm);
    for (int j = 0; j < 4; ++j) {
      const auto src = perm[static_cast<std::size_t>(j)];
      CHECK((a.M.col(src) - b.state().M.col(j)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(std::abs(a.phi(src) - b.state().phi(j)) < 1e-10);
      CHECK((a.Sigmas[static_cast<std::size_t>(src)] - b.state().Sigmas[static_cast<std::size_t>(j)]).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK((a.V - b.state().V).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(a.alpha - b.state().alpha) < 1e-10);
  }
}

TEST_CASE("fit invariants") {
  instances::Gen g(149);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t T = 1 + rep % 3;
    const Eigen::Index d = 2 + rep % 5;
    const auto data = instances::random_dataset(g, T, d, 4, 12);
    const auto h = instances::random_hyper(g, T);
    FitConfig config;
    config.max_sweeps = 40;
    const auto fit = cavi_fit(data, h, config);
    CHECK(fit.elbo_trace.size() == static_cast<std::size_t>(fit.sweeps_run));
    CHECK_NOTHROW(fit.state.validate());
    CHECK(fit.state.alpha + fit.state.beta == doctest::Approx(h.alpha0 + h.beta0 + static_cast<double>(d)).epsilon(1e-14));
    CHECK(fit.state.v == h.v0 + static_cast<double>(d));
    for (const auto& S : fit.state.Sigmas) CHECK(S.llt().info() == Eigen::Success);
    CHECK(fit.state.V.llt().info() == Eigen::Success);
  }
}

TEST_CASE("fit on separable data") {
  Eigen::VectorXd x(12), y(12);
  for (int i = 0; i < 12; ++i) {
    x(i) = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.25 * i);
    y(i) = x(i) > 0 ? 1.0 : 0.0;
  }
  const MultitaskDataset data({TaskData{"a", x, y, {}}});
  const auto fit = cavi_fit(data, simple_hyper(1));
  CHECK(fit.state.phi(0) > 0.9);
  CHECK(fit.state.M(0, 0) > 0.0);
}

TEST_CASE("fit is deterministic and honours its configuration") {
  instances::Gen g(151);
  const auto data = instances::random_dataset(g, 3, 6, 10, 20);
  const auto h = instances::random_hyper(g, 3);
  FitConfig config;
  config.init_mode = InitMode::small_random;
  config.seed = 42;
  const auto a = cavi_fit(data, h, config);
  const auto b = cavi_fit(data, h, config);
  CHECK(a.elbo_trace == b.elbo_trace);
  CHECK(a.state.M == b.state.M);
  CHECK(a.state.phi == b.state.phi);
  config.seed = 43;
  CHECK(cavi_fit(data, h, config).state.M != a.state.M);

  FitConfig one;
  one.max_sweeps = 1;
  const auto single = cavi_fit(data, h, one);
  CHECK(single.sweeps_run == 1);
  CHECK_FALSE(single.converged);

  FitConfig bad;
  bad.max_sweeps = 0;
  CHECK_THROWS_AS(cavi_fit(data, h, bad), DomainError);
  bad = FitConfig{};
  bad.elbo_rel_tol = 0.0;
  CHECK_THROWS_AS(cavi_fit(data, h, bad), DomainError);
}

TEST_CASE("initial state") {
  instances::Gen g(157);
  const auto data = instances::random_dataset(g, 2, 5, 3, 5);
  const auto h = instances::random_hyper(g, 2);
  const auto q = initial_state(data, h, FitConfig{});
  CHECK(q.phi.isApprox(Eigen::VectorXd::Constant(5, 0.5)));
  CHECK(q.M.isZero(0.0));
  CHECK(q.alpha == h.alpha0 + 2.5);
  CHECK(q.beta == h.beta0 + 2.5);
  CHECK(q.v == h.v0 + 5.0);
  CHECK(q.V.isApprox(h.V0 / 6.0));
  for (const auto& S : q.Sigmas) CHECK(S.isIdentity());
}
