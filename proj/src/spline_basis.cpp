#include "samspline/spline_basis.hpp"

#include <algorithm>
#include <cmath>

#include "samspline/error.hpp"

namespace samspline {

const char* to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::CubicRegressionShrinkage: return "cs";
    case BasisKind::BSpline: return "bs";
    case BasisKind::Identity: return "identity";
  }
  return "";
}

Eigen::VectorXd log_age_grid(int n_ages) {
  Eigen::VectorXd grid(n_ages);
  for (int a = 1; a <= n_ages; ++a) grid(a - 1) = std::log(static_cast<double>(a) + 1.0);
  return grid;
}

Eigen::VectorXd log_age_grid(const AgeRange& ages) { return log_age_grid(ages.count()); }

namespace {

void check_knots(const Eigen::VectorXd& knots) {
  for (Eigen::Index i = 1; i < knots.size(); ++i) {
    if (!(knots(i) > knots(i - 1))) {
      throw Error(ErrorCode::DegenerateKnots, "knots must be strictly increasing");
    }
  }
}

// Maps knot values to the interior second derivatives of the natural
// interpolant: m = B^{-1} D_h beta, with m = 0 at both ends.
struct NaturalSplineSystem {
  Eigen::MatrixXd B;   // (n-2) x (n-2)
  Eigen::MatrixXd Dh;  // (n-2) x n
};

NaturalSplineSystem natural_system(const Eigen::VectorXd& knots) {
  const Eigen::Index n = knots.size();
  Eigen::VectorXd h = knots.tail(n - 1) - knots.head(n - 1);
  NaturalSplineSystem sys;
  sys.B = Eigen::MatrixXd::Zero(n - 2, n - 2);
  sys.Dh = Eigen::MatrixXd::Zero(n - 2, n);
  for (Eigen::Index i = 0; i < n - 2; ++i) {
    // Row i belongs to interior knot i+1.
    sys.B(i, i) = (h(i) + h(i + 1)) / 3.0;
    if (i + 1 < n - 2) {
      sys.B(i, i + 1) = h(i + 1) / 6.0;
      sys.B(i + 1, i) = h(i + 1) / 6.0;
    }
    sys.Dh(i, i) = 1.0 / h(i);
    sys.Dh(i, i + 1) = -1.0 / h(i) - 1.0 / h(i + 1);
    sys.Dh(i, i + 2) = 1.0 / h(i + 1);
  }
  return sys;
}

}  // namespace

BasisPenalty build_cr_basis(const Eigen::VectorXd& knots) {
  if (knots.size() < 3) {
    throw Error(ErrorCode::InvalidArgument, "cubic regression spline needs at least 3 knots");
  }
  check_knots(knots);
  const auto sys = natural_system(knots);
  Eigen::LLT<Eigen::MatrixXd> llt(sys.B);
  BasisPenalty out;
  out.X = Eigen::MatrixXd::Identity(knots.size(), knots.size());
  out.S = sys.Dh.transpose() * llt.solve(sys.Dh);
  out.S = 0.5 * (out.S + out.S.transpose()).eval();
  return out;
}

Eigen::MatrixXd cr_design(const Eigen::VectorXd& knots, const Eigen::VectorXd& x) {
  check_knots(knots);
  const Eigen::Index n = knots.size();
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);  // rows: second derivative at each knot
  if (n >= 3) {
    const auto sys = natural_system(knots);
    F.middleRows(1, n - 2) = Eigen::LLT<Eigen::MatrixXd>(sys.B).solve(sys.Dh);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.size(), n);
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    const double xv = x(r);
    if (xv <= knots(0) || xv >= knots(n - 1)) {
      // Linear continuation using the end slope (second derivative is zero there).
      const bool left = xv <= knots(0);
      const Eigen::Index i = left ? 0 : n - 2;
      const double h = knots(i + 1) - knots(i);
      Eigen::RowVectorXd slope = Eigen::RowVectorXd::Zero(n);
      slope(i) -= 1.0 / h;
      slope(i + 1) += 1.0 / h;
      if (left) {
        slope -= h / 3.0 * F.row(i) + h / 6.0 * F.row(i + 1);
        out.row(r) = slope * (xv - knots(0));
        out(r, 0) += 1.0;
      } else {
        slope += h / 6.0 * F.row(i) + h / 3.0 * F.row(i + 1);
        out.row(r) = slope * (xv - knots(n - 1));
        out(r, n - 1) += 1.0;
      }
      continue;
    }
    Eigen::Index i = std::upper_bound(knots.data(), knots.data() + n, xv) - knots.data() - 1;
    i = std::clamp<Eigen::Index>(i, 0, n - 2);
    const double h = knots(i + 1) - knots(i);
    const double a = (knots(i + 1) - xv) / h;
    const double b = 1.0 - a;
    out(r, i) += a;
    out(r, i + 1) += b;
    out.row(r) += h * h / 6.0 * ((a * a * a - a) * F.row(i) + (b * b * b - b) * F.row(i + 1));
  }
  return out;
}

Eigen::VectorXd bspline_knot_vector(double lo, double hi, int n_basis, int degree) {
  const int n_interior = n_basis - degree - 1;
  if (n_interior < 0) {
    throw Error(ErrorCode::InvalidArgument, "too few basis functions for the B-spline degree");
  }
  if (!(hi > lo)) throw Error(ErrorCode::DegenerateKnots, "empty knot span");
  Eigen::VectorXd t(n_basis + degree + 1);
  for (int k = 0; k <= degree; ++k) {
    t(k) = lo;
    t(t.size() - 1 - k) = hi;
  }
  for (int k = 1; k <= n_interior; ++k) {
    t(degree + k) = lo + (hi - lo) * k / (n_interior + 1);
  }
  return t;
}

namespace {

// Derivative `deriv` of the degree-p basis function starting at knot i.
double bspline_value(const Eigen::VectorXd& t, int i, int p, double x, int deriv, int span) {
  if (deriv > p) return 0.0;
  if (p == 0) return (i == span) ? 1.0 : 0.0;
  double out = 0.0;
  const double d1 = t(i + p) - t(i);
  const double d2 = t(i + p + 1) - t(i + 1);
  if (deriv == 0) {
    if (d1 > 0) out += (x - t(i)) / d1 * bspline_value(t, i, p - 1, x, 0, span);
    if (d2 > 0) out += (t(i + p + 1) - x) / d2 * bspline_value(t, i + 1, p - 1, x, 0, span);
  } else {
    if (d1 > 0) out += p / d1 * bspline_value(t, i, p - 1, x, deriv - 1, span);
    if (d2 > 0) out -= p / d2 * bspline_value(t, i + 1, p - 1, x, deriv - 1, span);
  }
  return out;
}

// Index j of the knot interval [t_j, t_{j+1}) containing x; the right end of
// the span belongs to the last nonempty interval.
int find_span(const Eigen::VectorXd& t, int degree, double x) {
  const int n_basis = static_cast<int>(t.size()) - degree - 1;
  if (x >= t(n_basis)) {
    int j = n_basis - 1;
    while (j > degree && t(j) == t(j + 1)) --j;
    return j;
  }
  if (x <= t(degree)) return degree;
  int j = static_cast<int>(std::upper_bound(t.data(), t.data() + t.size(), x) - t.data()) - 1;
  return std::clamp(j, degree, n_basis - 1);
}

}  // namespace

Eigen::MatrixXd bspline_design(const Eigen::VectorXd& t, int degree, const Eigen::VectorXd& x,
                               int deriv) {
  const int n_basis = static_cast<int>(t.size()) - degree - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.size(), n_basis);
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    const int span = find_span(t, degree, x(r));
    for (int i = std::max(0, span - degree); i <= std::min(n_basis - 1, span); ++i) {
      out(r, i) = bspline_value(t, i, degree, x(r), deriv, span);
    }
  }
  return out;
}

BasisPenalty build_bspline_basis(const Eigen::VectorXd& grid, int degree) {
  if (degree < 1) throw Error(ErrorCode::InvalidArgument, "B-spline degree must be >= 1");
  if (grid.size() < degree + 1) {
    throw Error(ErrorCode::InvalidArgument, "B-spline basis needs at least degree+1 points");
  }
  check_knots(grid);
  const int n = static_cast<int>(grid.size());
  const Eigen::VectorXd t = bspline_knot_vector(grid(0), grid(n - 1), n, degree);
  BasisPenalty out;
  out.X = bspline_design(t, degree, grid, 0);
  out.S = Eigen::MatrixXd::Zero(n, n);
  // Three-point Gauss-Legendre is exact for the piecewise quadratic (f'')^2.
  const double node = std::sqrt(3.0 / 5.0);
  const double nodes[3] = {-node, 0.0, node};
  const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  for (Eigen::Index j = 0; j + 1 < t.size(); ++j) {
    const double a = t(j);
    const double b = t(j + 1);
    if (!(b > a)) continue;
    Eigen::VectorXd x(3);
    for (int q = 0; q < 3; ++q) x(q) = 0.5 * (a + b) + 0.5 * (b - a) * nodes[q];
    const Eigen::MatrixXd d2 = bspline_design(t, degree, x, 2);
    for (int q = 0; q < 3; ++q) {
      out.S.noalias() += 0.5 * (b - a) * weights[q] * d2.row(q).transpose() * d2.row(q);
    }
  }
  return out;
}

Eigen::MatrixXd apply_shrinkage(const Eigen::MatrixXd& S, double epsilon) {
  if (!(epsilon > 0)) throw Error(ErrorCode::InvalidArgument, "shrinkage epsilon must be > 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
  Eigen::VectorXd ev = eig.eigenvalues();
  const double max_ev = ev.maxCoeff();
  if (max_ev <= 0) throw Error(ErrorCode::NotPSD, "penalty has no positive eigenvalue");
  const double tol = 1e-10 * max_ev;
  if (ev.minCoeff() < -tol) throw Error(ErrorCode::NotPSD, "penalty has a negative eigenvalue");
  double min_nonzero = max_ev;
  bool any_zero = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) >= tol) {
      min_nonzero = std::min(min_nonzero, ev(i));
    } else {
      any_zero = true;
    }
  }
  if (!any_zero) return S;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < tol) ev(i) = epsilon * min_nonzero;
  }
  const auto& U = eig.eigenvectors();
  Eigen::MatrixXd out = U * ev.asDiagonal() * U.transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::VectorXd downweight_diagonal(int n_basis) {
  std::vector<int> ages(n_basis);
  for (int i = 0; i < n_basis; ++i) ages[i] = i;
  return downweight_diagonal(ages);
}

Eigen::VectorXd downweight_diagonal(const std::vector<int>& internal_ages) {
  Eigen::VectorXd d = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(internal_ages.size()));
  for (size_t i = 0; i < internal_ages.size(); ++i) {
    const int a = internal_ages[i] + 1;  // ages counted from 1
    if (a <= 3) d(static_cast<Eigen::Index>(i)) = std::exp(static_cast<double>(a - 4));
  }
  return d;
}

LogDet generalized_logdet(const std::vector<Eigen::MatrixXd>& S, const Eigen::VectorXd& lambda) {
  if (S.empty() || static_cast<Eigen::Index>(S.size()) != lambda.size()) {
    throw Error(ErrorCode::InvalidArgument, "one lambda per penalty matrix required");
  }
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(S[0].rows(), S[0].cols());
  for (size_t i = 0; i < S.size(); ++i) {
    if (!(lambda(static_cast<Eigen::Index>(i)) > 0)) {
      throw Error(ErrorCode::InvalidArgument, "lambda must be positive");
    }
    total += lambda(static_cast<Eigen::Index>(i)) * S[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (total + total.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double max_ev = ev.size() ? ev.maxCoeff() : 0.0;
  if (!(max_ev > 0)) throw Error(ErrorCode::AllZeroMatrix, "penalty sum has no positive eigenvalue");
  const double tol = 1e-10 * max_ev;
  LogDet out;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > tol) {
      out.value += std::log(ev(i));
      ++out.rank;
    }
  }
  return out;
}

SplineBlock make_spline_block(BasisKind kind, const std::vector<int>& age_indices,
                              const SplineOptions& options) {
  SplineBlock block;
  const int n = static_cast<int>(age_indices.size());
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "spline block without ages");
  block.knots.resize(n);
  for (int i = 0; i < n; ++i) block.knots(i) = std::log(age_indices[i] + 2.0);
  check_knots(block.knots);

  if (kind == BasisKind::CubicRegressionShrinkage && n < 3) kind = BasisKind::Identity;
  if (kind == BasisKind::BSpline && n < options.bs_degree + 1) kind = BasisKind::Identity;
  block.kind = kind;
  block.n_basis = n;
  block.D = options.downweight_young ? downweight_diagonal(age_indices) : Eigen::VectorXd::Ones(n);

  BasisPenalty bp;
  switch (kind) {
    case BasisKind::Identity:
      block.X = Eigen::MatrixXd::Identity(n, n);
      return block;
    case BasisKind::CubicRegressionShrinkage:
      bp = build_cr_basis(block.knots);
      bp.S = apply_shrinkage(bp.S, options.shrinkage_epsilon);
      break;
    case BasisKind::BSpline:
      bp = build_bspline_basis(block.knots, options.bs_degree);
      break;
  }
  block.X = std::move(bp.X);
  block.S.push_back(std::move(bp.S));
  for (const auto& S : block.S) {
    Eigen::MatrixXd St = block.D.asDiagonal() * S * block.D.asDiagonal();
    St = 0.5 * (St + St.transpose()).eval();
    const LogDet ld = generalized_logdet({St}, Eigen::VectorXd::Ones(1));
    block.S_tilde.push_back(std::move(St));
    block.rank.push_back(ld.rank);
    block.logdet.push_back(ld.value);
  }
  return block;
}

}  // namespace samspline
