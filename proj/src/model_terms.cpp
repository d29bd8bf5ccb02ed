#include "samspline/model_terms.hpp"

#include <cmath>

#include "samspline/error.hpp"
#include "samspline/population_model.hpp"

namespace samspline {

namespace {

double lower_bound_rho(int n_ages) { return n_ages > 1 ? -1.0 / (n_ages - 1) : -1.0; }

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double rho_from_logit(double x, int n_ages) {
  const double lo = lower_bound_rho(n_ages);
  return lo + (1.0 - lo) * logistic(x);
}

double rho_derivative(double x, int n_ages) {
  const double lo = lower_bound_rho(n_ages);
  const double s = logistic(x);
  return (1.0 - lo) * s * (1.0 - s);
}

double logit_from_rho(double rho, int n_ages) {
  const double lo = lower_bound_rho(n_ages);
  if (!(rho > lo && rho < 1.0)) throw Error(ErrorCode::InvalidArgument, "rho_F outside the positive-definite range");
  const double s = (rho - lo) / (1.0 - lo);
  return std::log(s / (1.0 - s));
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double log_prior_rho(const Eigen::VectorXd& rho, double K, double delta, Eigen::VectorXd* grad) {
  double v = 0.0;
  if (grad) grad->resize(rho.size());
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    const double t = delta * (rho[i] - K);
    v -= softplus(t);
    if (grad) (*grad)[i] = -delta * logistic(t);
  }
  return v;
}

// ---------------------------------------------------------------------------

FIncrementTerm::FIncrementTerm(std::vector<int> groups) : groups_(std::move(groups)) {
  n_ages_ = static_cast<int>(groups_.size());
  n_groups_ = 0;
  for (int g : groups_) n_groups_ = std::max(n_groups_, g + 1);
  if (n_ages_ < 1) throw Error(ErrorCode::InvalidArgument, "F increment term needs ages");
}

void FIncrementTerm::evaluate(std::span<const double> x, int order, LocalDerivs& out) const {
  const int A = n_ages_;
  const int G = n_groups_;
  const int k = A + G + 1;
  const int ix = A + G;  // rho logit position
  out.reset(k, order);

  Eigen::VectorXd s(A), e(A);
  for (int a = 0; a < A; ++a) {
    s[a] = std::exp(x[static_cast<size_t>(A + groups_[static_cast<size_t>(a)])]);
    e[a] = x[static_cast<size_t>(a)] / s[a];
  }
  const double rho = rho_from_logit(x[static_cast<size_t>(ix)], A);
  const double drho = rho_derivative(x[static_cast<size_t>(ix)], A);
  // R^{-1} = (I - c 11') / (1 - rho), c = rho / (1 + (A-1) rho)
  const double c = rho / (1.0 + (A - 1) * rho);
  Eigen::MatrixXd Rinv = Eigen::MatrixXd::Constant(A, A, -c);
  Rinv.diagonal().array() += 1.0;
  Rinv /= (1.0 - rho);
  const Eigen::VectorXd r = Rinv * e;
  double sum_log_sd = 0.0;
  for (int a = 0; a < A; ++a) sum_log_sd += std::log(s[a]);
  const double logdetR = (A - 1) * std::log1p(-rho) + std::log1p((A - 1) * rho);
  out.value = 0.5 * e.dot(r) + sum_log_sd + 0.5 * logdetR + 0.5 * A * kLog2Pi;
  if (order == 0) return;

  // J = dR/drho = 11' - I
  const double sum_r = r.sum();
  const Eigen::VectorXd Jr = Eigen::VectorXd::Constant(A, sum_r) - r;
  const double dlogdetR = Rinv.sum() - Rinv.trace();
  for (int a = 0; a < A; ++a) out.g[static_cast<size_t>(a)] = r[a] / s[a];
  for (int a = 0; a < A; ++a) {
    out.g[static_cast<size_t>(A + groups_[static_cast<size_t>(a)])] += 1.0 - r[a] * e[a];
  }
  out.g[static_cast<size_t>(ix)] = (-0.5 * r.dot(Jr) + 0.5 * dlogdetR) * drho;
  if (order == 1) return;

  // Q = S^{-1} R^{-1} S^{-1}
  Eigen::MatrixXd Q(A, A);
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < A; ++b) Q(a, b) = Rinv(a, b) / (s[a] * s[b]);
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < A; ++b) out.h(a, b) = Q(a, b);
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(x.data(), A);
  const Eigen::VectorXd Qd = Q * d;
  for (int g = 0; g < G; ++g) {
    for (int a = 0; a < A; ++a) {
      double v = groups_[static_cast<size_t>(a)] == g ? -Qd[a] : 0.0;
      for (int b = 0; b < A; ++b) {
        if (groups_[static_cast<size_t>(b)] == g) v -= Q(a, b) * d[b];
      }
      out.h(a, A + g) = v;
      out.h(A + g, a) = v;
    }
  }
  // dQ/drho d = -S^{-1} R^{-1} J r
  const Eigen::VectorXd RJr = Rinv * Jr;
  for (int a = 0; a < A; ++a) {
    const double v = -RJr[a] / s[a] * drho;
    out.h(a, ix) = v;
    out.h(ix, a) = v;
  }
  if (order == 2) return;

  // dQ/drho = -S^{-1} R^{-1} J R^{-1} S^{-1}
  const Eigen::MatrixXd RJ = Rinv * (Eigen::MatrixXd::Ones(A, A) - Eigen::MatrixXd::Identity(A, A));
  const Eigen::MatrixXd dRinv = -RJ * Rinv;
  for (int a = 0; a < A; ++a) {
    for (int b = 0; b < A; ++b) {
      const int ga = groups_[static_cast<size_t>(a)];
      const int gb = groups_[static_cast<size_t>(b)];
      out.t(a, b, A + ga) -= Q(a, b);
      out.t(a, b, A + gb) -= Q(a, b);
      out.t(a, b, ix) = dRinv(a, b) / (s[a] * s[b]) * drho;
    }
  }
}

// ---------------------------------------------------------------------------

PenaltyPriorTerm::PenaltyPriorTerm(Eigen::MatrixXd S, int rank, double logdet)
    : S_(std::move(S)), rank_(rank), logdet_(logdet) {}

double PenaltyPriorTerm::value(const Eigen::VectorXd& b, double rho, Eigen::VectorXd* grad_b,
                               double* grad_rho) const {
  const Eigen::VectorXd Sb = S_ * b;
  const double q = b.dot(Sb);
  const double lam = std::exp(rho);
  if (grad_b) *grad_b = lam * Sb;
  if (grad_rho) *grad_rho = 0.5 * lam * q - 0.5 * rank_;
  return 0.5 * lam * q - 0.5 * rank_ * rho - 0.5 * logdet_ + 0.5 * rank_ * kLog2Pi;
}

void PenaltyPriorTerm::evaluate(std::span<const double> x, int order, LocalDerivs& out) const {
  const int n = static_cast<int>(S_.rows());
  out.reset(n + 1, order);
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
  const double rho = x[static_cast<size_t>(n)];
  const double lam = std::exp(rho);
  const Eigen::VectorXd Sb = S_ * b;
  out.value = 0.5 * lam * b.dot(Sb) - 0.5 * rank_ * rho - 0.5 * logdet_ + 0.5 * rank_ * kLog2Pi;
  if (order == 0) return;
  for (int i = 0; i < n; ++i) out.g[static_cast<size_t>(i)] = lam * Sb[i];
  out.g[static_cast<size_t>(n)] = 0.5 * lam * b.dot(Sb) - 0.5 * rank_;
  if (order == 1) return;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out.h(i, j) = lam * S_(i, j);
    out.h(i, n) = lam * Sb[i];
    out.h(n, i) = lam * Sb[i];
  }
  out.h(n, n) = 0.5 * lam * b.dot(Sb);
  if (order == 2) return;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.t(i, j, n) = lam * S_(i, j);
}

}  // namespace samspline
