#pragma once

namespace bmtl {

// Scalar special functions used by the log joint and the ELBO. All of them
// throw DomainError outside their domain.

double digamma(double x);
double log_gamma(double x);

/// psi_p(x) = sum_{i=1..p} psi(x + (1 - i) / 2), requires x > (p - 1) / 2.
double multivariate_digamma(double x, int p);

/// ln Gamma_p(x) = p(p-1)/4 ln(pi) + sum_{i=1..p} ln Gamma(x + (1 - i) / 2).
double multivariate_log_gamma(double x, int p);

double log_beta(double a, double b);

/// Numerically stable logistic function.
double sigmoid(double x) noexcept;

/// log(1 + exp(x)) without overflow.
double log1p_exp(double x) noexcept;

}  // namespace bmtl
