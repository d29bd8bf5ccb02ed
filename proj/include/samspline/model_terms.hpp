#pragma once

#include <vector>

#include <Eigen/Dense>

#include "samspline/laplace.hpp"

namespace samspline {

// Correlation of F increments from its unconstrained parameter x:
// rho = lo + (1 - lo) * logistic(x), lo = -1/(A-1), so the exchangeable
// correlation matrix stays positive definite.
double rho_from_logit(double x, int n_ages);
double rho_derivative(double x, int n_ages);
double logit_from_rho(double rho, int n_ages);

// Multivariate Gaussian density of one year's logF increments d (A values)
// with per-group log sds and exchangeable correlation. Local variables:
// d_0..d_{A-1}, log_sd_0..log_sd_{G-1}, rho logit.
class FIncrementTerm final : public Term {
 public:
  explicit FIncrementTerm(std::vector<int> groups);
  int size() const override { return n_ages_ + n_groups_ + 1; }
  void evaluate(std::span<const double> x, int order, LocalDerivs& out) const override;

 private:
  std::vector<int> groups_;
  int n_ages_;
  int n_groups_;
};

// Improper Gaussian prior with penalty exp(rho) * S on coefficients b:
// 1/2 e^rho b'Sb - 1/2 rank rho - 1/2 logdet+(S) + 1/2 rank log(2 pi).
// Local variables: b_0..b_{n-1}, rho.
class PenaltyPriorTerm final : public Term {
 public:
  PenaltyPriorTerm(Eigen::MatrixXd S, int rank, double logdet);
  int size() const override { return static_cast<int>(S_.rows()) + 1; }
  void evaluate(std::span<const double> x, int order, LocalDerivs& out) const override;

  // Same quantity on plain vectors with its gradient (b then rho).
  double value(const Eigen::VectorXd& b, double rho, Eigen::VectorXd* grad_b, double* grad_rho) const;

 private:
  Eigen::MatrixXd S_;
  int rank_;
  double logdet_;
};

// Overflow-safe log(1 + e^x).
double softplus(double x);

// Sum over components of log(logistic(delta (K - rho_i))).
double log_prior_rho(const Eigen::VectorXd& rho, double K, double delta, Eigen::VectorXd* grad = nullptr);

}  // namespace samspline
