#include "bmtl/special_functions.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bmtl/errors.hpp"

namespace bmtl {

namespace {

void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

// Asymptotic expansions are used once the argument has been shifted past
// these points by the recurrences.
constexpr double kDigammaShift = 10.0;
constexpr double kLogGammaShift = 10.0;

}  // namespace

double digamma(double x) {
  require_positive(x, "digamma");
  double shift = 0.0;
  while (x < kDigammaShift) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series: -sum B_2k / (2k x^2k), through k = 7.
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 -
                                              inv2 * (691.0 / 32760 - inv2 * (1.0 / 12)))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

double log_gamma(double x) {
  require_positive(x, "log_gamma");
  if (x == 1.0 || x == 2.0) return 0.0;
  double shift = 0.0;
  while (x < kLogGammaShift) {
    shift -= std::log(x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * (1.0 / 12 -
             inv2 * (1.0 / 360 -
                     inv2 * (1.0 / 1260 -
                             inv2 * (1.0 / 1680 -
                                     inv2 * (1.0 / 1188 -
                                             inv2 * (691.0 / 360360 - inv2 * (1.0 / 156)))))));
  constexpr double half_log_two_pi = 0.91893853320467274178;
  return shift + (x - 0.5) * std::log(x) - x + half_log_two_pi + series;
}

double multivariate_digamma(double x, int p) {
  if (p < 1) throw DomainError("multivariate_digamma: dimension must be >= 1");
  if (!(x > 0.5 * (p - 1))) {
    throw DomainError("multivariate_digamma: requires x > (p - 1) / 2");
  }
  double acc = 0.0;
  for (int i = 1; i <= p; ++i) acc += digamma(x + 0.5 * (1 - i));
  return acc;
}

double multivariate_log_gamma(double x, int p) {
  if (p < 1) throw DomainError("multivariate_log_gamma: dimension must be >= 1");
  if (!(x > 0.5 * (p - 1))) {
    throw DomainError("multivariate_log_gamma: requires x > (p - 1) / 2");
  }
  double acc = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int i = 1; i <= p; ++i) acc += log_gamma(x + 0.5 * (1 - i));
  return acc;
}

double log_beta(double a, double b) {
  require_positive(a, "log_beta");
  require_positive(b, "log_beta");
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1p_exp(double x) noexcept {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace bmtl
