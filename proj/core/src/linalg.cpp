#include "bmtl/linalg.hpp"

#include <cmath>

#include "bmtl/errors.hpp"

namespace bmtl {

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw ShapeError("cholesky: matrix must be square and non-empty");
  }
  if (!a.allFinite()) throw DomainError("cholesky: matrix has non-finite entries");

  JitteredCholesky out;
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success) return out;

  const double n = static_cast<double>(a.rows());
  const double scale = std::abs(a.trace()) / n;
  if (scale > 0.0) {
    for (double factor = 1e-10; factor <= 1e-6 * (1.0 + 1e-9); factor *= 10.0) {
      const double jitter = factor * scale;
      Eigen::MatrixXd shifted = a;
      shifted.diagonal().array() += jitter;
      out.llt.compute(shifted);
      if (out.llt.info() == Eigen::Success) {
        out.jitter = jitter;
        return out;
      }
    }
  }
  throw DomainError("cholesky: matrix is not positive definite (jitter up to 1e-6*trace/n failed)");
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a) {
  const auto chol = cholesky_with_jitter(a);
  Eigen::MatrixXd inv = chol.llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  return 0.5 * (inv + inv.transpose());
}

namespace {

double log_det_from(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

double spd_log_det(const Eigen::MatrixXd& a) { return log_det_from(cholesky_with_jitter(a).llt); }

double strict_spd_log_det(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw ShapeError("log det: matrix must be square and non-empty");
  }
  if (!a.allFinite() || !is_symmetric(a, 1e-10)) {
    throw DomainError("log det: matrix is not symmetric positive definite");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw DomainError("log det: matrix is not symmetric positive definite");
  }
  return log_det_from(llt);
}

bool is_symmetric(const Eigen::MatrixXd& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace bmtl
