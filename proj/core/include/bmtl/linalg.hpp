#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace bmtl {

/// Cholesky factorization with the escalating diagonal jitter policy:
/// plain LLT first, then jitter 1e-10 * trace / n multiplied by ten per
/// retry up to 1e-6 * trace / n. Throws DomainError when all attempts fail.
struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a);

/// Inverse of a symmetric positive-definite matrix through the jittered
/// factorization. The result is symmetrized.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a);

/// log det of an SPD matrix through the jittered factorization.
double spd_log_det(const Eigen::MatrixXd& a);

/// log det without any jitter; throws DomainError if `a` is not SPD.
double strict_spd_log_det(const Eigen::MatrixXd& a);

bool is_symmetric(const Eigen::MatrixXd& a, double tol = 1e-12);

}  // namespace bmtl
