#pragma once

#include <functional>

#include <Eigen/Core>

namespace numeric {

using Objective = std::function<double(const Eigen::VectorXd&)>;

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-5);
Eigen::MatrixXd central_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-4);

// Damped Newton ascent with finite-difference derivatives and a backtracking
// line search; falls back to a gradient step when the Hessian is not
// negative definite. f may return -inf outside its domain.
Eigen::VectorXd maximize(const Objective& f, Eigen::VectorXd x, int max_iter = 200,
                         double grad_tol = 1e-9);

// Golden-section plus parabolic search (Brent) for a unimodal function on [a, b].
double maximize_1d(const std::function<double(double)>& f, double a, double b);

}  // namespace numeric
