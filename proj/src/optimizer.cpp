#include "samspline/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace samspline {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Probe {
  double a = 0.0;
  double f = kInf;
  double d = 0.0;  // directional derivative
  Eigen::VectorXd g;
  bool ok = false;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), clamped to the
// interior of the bracket; bisection when the cubic is unusable.
double cubic_step(const Probe& lo, const Probe& hi) {
  const double a = lo.a, b = hi.a;
  const double mid = 0.5 * (a + b);
  if (!hi.ok) return a + 0.25 * (b - a);
  const double d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
  const double disc = d1 * d1 - lo.d * hi.d;
  if (disc < 0) return mid;
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double t = b - (b - a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
  const double lo_b = std::min(a, b), hi_b = std::max(a, b);
  const double margin = 0.1 * (hi_b - lo_b);
  if (!std::isfinite(t) || t < lo_b + margin || t > hi_b - margin) return mid;
  return t;
}

}  // namespace

BfgsResult minimize_bfgs(const GradientObjective& f, const Eigen::VectorXd& x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = x0;
  res.g = Eigen::VectorXd::Zero(n);

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    ++res.evaluations;
    try {
      const double v = f(x, g);
      if (!std::isfinite(v) || !g.allFinite()) return kInf;
      return v;
    } catch (const std::exception&) {
      return kInf;
    }
  };

  res.f = eval(res.x, res.g);
  res.f_initial = res.f;
  if (!std::isfinite(res.f)) {
    res.message = "objective not finite at the initial point";
    return res;
  }
  auto converged = [&] {
    return n == 0 || res.g.lpNorm<Eigen::Infinity>() <= options.grad_tol * std::max(1.0, std::abs(res.f));
  };
  if (converged()) {
    res.converged = true;
    res.message = "converged";
    return res;
  }

  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;
  const double c1 = 1e-4, c2 = 0.9;

  for (res.iterations = 0; res.iterations < options.max_iter;) {
    Eigen::VectorXd p = -Hinv * res.g;
    double d0 = res.g.dot(p);
    if (!(d0 < 0)) {
      Hinv.setIdentity();
      fresh = true;
      p = -res.g;
      d0 = res.g.dot(p);
    }
    double a1 = 1.0;
    if (fresh) a1 = std::min(1.0, 1.0 / std::max(1e-12, p.lpNorm<Eigen::Infinity>()));

    Probe base{0.0, res.f, d0, res.g, true};
    Probe prev = base;
    Probe best;
    bool found = false;
    double a = a1;
    // Bracketing phase.
    Probe lo, hi;
    bool bracketed = false;
    for (int k = 0; k < 30 && !found && !bracketed; ++k) {
      Probe cur;
      cur.a = a;
      cur.g.resize(n);
      cur.f = eval(res.x + a * p, cur.g);
      cur.ok = std::isfinite(cur.f);
      if (cur.ok) cur.d = cur.g.dot(p);
      if (!cur.ok || cur.f > res.f + c1 * a * d0 || (k > 0 && cur.f >= prev.f)) {
        lo = prev;
        hi = cur;
        bracketed = true;
        break;
      }
      if (std::abs(cur.d) <= -c2 * d0) {
        best = cur;
        found = true;
        break;
      }
      if (cur.d >= 0) {
        lo = cur;
        hi = prev;
        bracketed = true;
        break;
      }
      prev = cur;
      a *= 2.0;
    }
    // Zoom phase.
    for (int k = 0; k < 40 && bracketed && !found; ++k) {
      Probe cur;
      cur.a = cubic_step(lo, hi);
      cur.g.resize(n);
      cur.f = eval(res.x + cur.a * p, cur.g);
      cur.ok = std::isfinite(cur.f);
      if (cur.ok) cur.d = cur.g.dot(p);
      if (!cur.ok || cur.f > res.f + c1 * cur.a * d0 || cur.f >= lo.f) {
        hi = cur;
      } else {
        if (std::abs(cur.d) <= -c2 * d0) {
          best = cur;
          found = true;
          break;
        }
        if (cur.d * (hi.a - lo.a) >= 0) hi = lo;
        lo = cur;
      }
      if (std::abs(hi.a - lo.a) < 1e-14 * std::max(1.0, std::abs(lo.a))) break;
    }
    // Accept a sufficient-decrease point even without the curvature condition.
    if (!found && bracketed && lo.a > 0 && lo.ok && lo.f < res.f) {
      best = lo;
      found = true;
    }
    if (!found) {
      if (!fresh) {
        Hinv.setIdentity();
        fresh = true;
        continue;
      }
      res.message = "line search failed";
      return res;
    }

    const Eigen::VectorXd s = best.a * p;
    const Eigen::VectorXd y = best.g - res.g;
    res.x += s;
    res.f = best.f;
    res.g = best.g;
    ++res.iterations;
    if (converged()) {
      res.converged = true;
      res.message = "converged";
      return res;
    }
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        Hinv *= sy / y.dot(y);
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * y;
      Hinv += (rho * rho * y.dot(Hy) + rho) * s * s.transpose() - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  res.message = "iteration limit reached";
  return res;
}

}  // namespace samspline
