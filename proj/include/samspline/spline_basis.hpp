#pragma once

#include <vector>

#include <Eigen/Dense>

#include "samspline/stock_data.hpp"

namespace samspline {

enum class BasisKind {
  CubicRegressionShrinkage,  // "cs": cardinal natural cubic spline with shrinkage
  BSpline,                   // "bs": B-spline with uniform interior knots
  Identity,                  // one free value per age, no penalty
};

const char* to_string(BasisKind kind);

// Basis and penalties for one age-dependent parameter block. Rows of X are
// the ages the block covers, columns are basis functions.
struct SplineBlock {
  BasisKind kind = BasisKind::Identity;
  int n_basis = 0;
  Eigen::VectorXd knots;          // log-age positions of the covered ages
  Eigen::MatrixXd X;              // ages x n_basis
  std::vector<Eigen::MatrixXd> S;        // penalties as built (after shrinkage for cs)
  Eigen::VectorXd D;              // diagonal of the down-weighting matrix
  std::vector<Eigen::MatrixXd> S_tilde;  // D S_i D
  std::vector<int> rank;          // rank of each S_tilde
  std::vector<double> logdet;     // log pseudo-determinant of each S_tilde

  bool penalized() const { return !S_tilde.empty(); }
};

struct BasisPenalty {
  Eigen::MatrixXd X;
  Eigen::MatrixXd S;
};

struct SplineOptions {
  double shrinkage_epsilon = 0.01;
  int bs_degree = 3;
  bool downweight_young = true;
};

// log(a+1) for internal ages a = 1..A.
Eigen::VectorXd log_age_grid(const AgeRange& ages);
Eigen::VectorXd log_age_grid(int n_ages);

// Cardinal natural cubic spline: coefficient i is the function value at
// knot i, and S gives the exact integrated squared second derivative.
BasisPenalty build_cr_basis(const Eigen::VectorXd& knots);

// Values of the cardinal natural cubic spline basis at arbitrary points.
// Outside the knot span the spline continues linearly.
Eigen::MatrixXd cr_design(const Eigen::VectorXd& knots, const Eigen::VectorXd& x);

// Clamped knot vector with uniform interior knots giving n_basis functions.
Eigen::VectorXd bspline_knot_vector(double lo, double hi, int n_basis, int degree);

// Basis function values (deriv = 0) or derivatives at points x.
Eigen::MatrixXd bspline_design(const Eigen::VectorXd& knot_vector, int degree,
                               const Eigen::VectorXd& x, int deriv = 0);

// B-spline basis on the grid with one basis function per grid point and the
// exact second-derivative penalty over the grid span.
BasisPenalty build_bspline_basis(const Eigen::VectorXd& grid, int degree = 3);

// Lifts the zero eigenvalues of S to epsilon times the smallest nonzero one.
Eigen::MatrixXd apply_shrinkage(const Eigen::MatrixXd& S, double epsilon);

// exp(a - 4) for the three youngest ages, 1 elsewhere.
Eigen::VectorXd downweight_diagonal(int n_basis);
Eigen::VectorXd downweight_diagonal(const std::vector<int>& internal_ages);

struct LogDet {
  double value = 0.0;
  int rank = 0;
};

// log of the product of the nonzero eigenvalues of sum_i lambda_i S_i.
LogDet generalized_logdet(const std::vector<Eigen::MatrixXd>& S, const Eigen::VectorXd& lambda);

// Builds the block for the ages given as zero-based indices into the stock's
// age range. Falls back to Identity when there are too few ages for the kind.
SplineBlock make_spline_block(BasisKind kind, const std::vector<int>& age_indices,
                              const SplineOptions& options = {});

}  // namespace samspline
