#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace samspline {

// f(x, grad) returns the value and fills grad. May throw; a throwing or
// non-finite evaluation is treated as +infinity by the line search.
using GradientObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iter = 500;
  double grad_tol = 1e-5;  // on max |g_i| relative to max(1, |f|)
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double f_initial = 0.0;
  Eigen::VectorXd g;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

// Quasi-Newton minimization with a strong Wolfe line search. x0 must be a
// point where f evaluates.
BfgsResult minimize_bfgs(const GradientObjective& f, const Eigen::VectorXd& x0, const BfgsOptions& options);

}  // namespace samspline
