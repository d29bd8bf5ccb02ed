#include "samspline/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace samspline {

void LocalDerivs::reset(int size, int order) {
  k = size;
  value = 0.0;
  const auto n = static_cast<size_t>(size);
  if (order >= 1) g.assign(n, 0.0);
  if (order >= 2) H.assign(n * n, 0.0);
  if (order >= 3) T.assign(n * n * n, 0.0);
}

LaplaceProblem::LaplaceProblem(int n_inner, int n_outer) : n_inner_(n_inner), n_outer_(n_outer) {
  if (n_inner < 0 || n_outer < 0) throw Error(ErrorCode::InvalidArgument, "negative variable count");
}

void LaplaceProblem::add_term(std::unique_ptr<Term> term, std::vector<LocalVar> vars) {
  if (finalized_) throw Error(ErrorCode::InvalidArgument, "problem already finalized");
  if (!term || term->size() != static_cast<int>(vars.size())) {
    throw Error(ErrorCode::InvalidArgument, "term size does not match its variables");
  }
  Entry e;
  for (const auto& v : vars) {
    if (v.empty()) throw Error(ErrorCode::InvalidArgument, "local variable without references");
    const bool inner = v.front().index < n_inner_;
    for (const auto& r : v) {
      if (r.index < 0 || r.index >= n_inner_ + n_outer_) {
        throw Error(ErrorCode::InvalidArgument, "variable index out of range");
      }
      if ((r.index < n_inner_) != inner) {
        throw Error(ErrorCode::InvalidArgument, "local variable mixes inner and outer variables");
      }
    }
    e.inner.push_back(inner);
    e.max_refs = std::max(e.max_refs, static_cast<int>(v.size()));
  }
  e.term = std::move(term);
  e.vars = std::move(vars);
  entries_.push_back(std::move(e));
}

void LaplaceProblem::finalize() {
  if (finalized_) return;
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n_inner_; ++i) trip.emplace_back(i, i, 1.0);
  for (const auto& e : entries_) {
    const int k = static_cast<int>(e.vars.size());
    for (int i = 0; i < k; ++i) {
      if (!e.inner[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < k; ++j) {
        if (!e.inner[static_cast<size_t>(j)]) continue;
        for (const auto& a : e.vars[static_cast<size_t>(i)]) {
          for (const auto& b : e.vars[static_cast<size_t>(j)]) {
            if (a.index >= b.index) trip.emplace_back(a.index, b.index, 1.0);
          }
        }
      }
    }
  }
  pattern_.resize(n_inner_, n_inner_);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  auto slot_of = [&](int r, int c) {
    const int* outer = pattern_.outerIndexPtr();
    const int* rows = pattern_.innerIndexPtr();
    const int* pos = std::lower_bound(rows + outer[c], rows + outer[c + 1], r);
    return static_cast<int>(pos - rows);
  };
  for (auto& e : entries_) {
    const int k = static_cast<int>(e.vars.size());
    for (int i = 0; i < k; ++i) {
      if (!e.inner[static_cast<size_t>(i)]) continue;
      for (int j = 0; j < k; ++j) {
        if (!e.inner[static_cast<size_t>(j)]) continue;
        for (const auto& a : e.vars[static_cast<size_t>(i)]) {
          for (const auto& b : e.vars[static_cast<size_t>(j)]) {
            const int r = std::max(a.index, b.index);
            const int c = std::min(a.index, b.index);
            e.pairs.push_back({i * k + j, slot_of(r, c), a.coef * b.coef, a.index >= b.index});
          }
        }
      }
    }
  }
  finalized_ = true;
}

double LaplaceProblem::value(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const {
  LocalDerivs d;
  std::vector<double> x;
  double f = 0.0;
  for (const auto& e : entries_) {
    x.assign(e.vars.size(), 0.0);
    for (size_t i = 0; i < e.vars.size(); ++i) {
      for (const auto& r : e.vars[i]) {
        x[i] += r.coef * (r.index < n_inner_ ? u[r.index] : theta[r.index - n_inner_]);
      }
    }
    e.term->evaluate(x, 0, d);
    f += d.value;
  }
  return f;
}

// ---------------------------------------------------------------------------

LaplaceSolver::LaplaceSolver(const LaplaceProblem& problem, InnerOptions options)
    : problem_(&problem), options_(options) {
  if (!problem.finalized()) throw Error(ErrorCode::InvalidArgument, "problem not finalized");
  const int nu = problem.n_inner();
  const int nt = problem.n_outer();
  z_.resize(nu + nt);
  g_u_ = Eigen::VectorXd::Zero(nu);
  g_t_ = Eigen::VectorXd::Zero(nt);
  w_ = Eigen::VectorXd::Zero(nu);
  trace_t_ = Eigen::VectorXd::Zero(nt);
  H_ = problem.pattern();
  H_ut_ = Eigen::MatrixXd::Zero(nu, nt);
  p_slots_.assign(static_cast<size_t>(H_.nonZeros()), 0.0);
}

double LaplaceSolver::evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& theta, int order,
                               bool want_outer) {
  const LaplaceProblem& pb = *problem_;
  const int nu = pb.n_inner();
  if (u.size() != nu || theta.size() != pb.n_outer()) {
    throw Error(ErrorCode::LayoutMismatch, "variable vector sizes do not match the problem");
  }
  z_.head(nu) = u;
  z_.tail(pb.n_outer()) = theta;
  if (order >= 1) {
    g_u_.setZero();
    g_t_.setZero();
  }
  double* hv = H_.valuePtr();
  if (order >= 2) {
    std::fill(hv, hv + H_.nonZeros(), 0.0);
    if (want_outer) H_ut_.setZero();
  }
  if (order >= 3) {
    w_.setZero();
    trace_t_.setZero();
  }

  double f = 0.0;
  for (const auto& e : pb.entries()) {
    const int k = static_cast<int>(e.vars.size());
    xloc_.assign(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < k; ++i) {
      for (const auto& r : e.vars[static_cast<size_t>(i)]) xloc_[static_cast<size_t>(i)] += r.coef * z_[r.index];
    }
    e.term->evaluate(std::span<const double>(xloc_.data(), static_cast<size_t>(k)), order, local_);
    f += local_.value;
    if (order == 0) continue;

    for (int i = 0; i < k; ++i) {
      const double gi = local_.g[static_cast<size_t>(i)];
      for (const auto& r : e.vars[static_cast<size_t>(i)]) {
        if (r.index < nu) {
          g_u_[r.index] += r.coef * gi;
        } else {
          g_t_[r.index - nu] += r.coef * gi;
        }
      }
    }
    if (order == 1) continue;

    for (const auto& p : e.pairs) {
      if (p.lower) hv[p.slot] += p.coef * local_.H[static_cast<size_t>(p.local)];
    }
    if (want_outer) {
      for (int i = 0; i < k; ++i) {
        if (!e.inner[static_cast<size_t>(i)]) continue;
        for (int j = 0; j < k; ++j) {
          if (e.inner[static_cast<size_t>(j)]) continue;
          const double hij = local_.h(i, j);
          if (hij == 0.0) continue;
          for (const auto& a : e.vars[static_cast<size_t>(i)]) {
            for (const auto& b : e.vars[static_cast<size_t>(j)]) {
              H_ut_(a.index, b.index - nu) += a.coef * b.coef * hij;
            }
          }
        }
      }
    }
    if (order == 2) continue;

    // Contract the third derivatives with the selected inverse.
    pl_.assign(static_cast<size_t>(k * k), 0.0);
    for (const auto& p : e.pairs) pl_[static_cast<size_t>(p.local)] += p.coef * p_slots_[static_cast<size_t>(p.slot)];
    for (int m = 0; m < k; ++m) {
      double v = 0.0;
      for (int ij = 0; ij < k * k; ++ij) {
        if (pl_[static_cast<size_t>(ij)] != 0.0) v += pl_[static_cast<size_t>(ij)] * local_.T[static_cast<size_t>(ij * k + m)];
      }
      if (v == 0.0) continue;
      for (const auto& r : e.vars[static_cast<size_t>(m)]) {
        if (r.index < nu) {
          w_[r.index] += 0.5 * r.coef * v;
        } else {
          trace_t_[r.index - nu] += 0.5 * r.coef * v;
        }
      }
    }
  }
  return f;
}

bool LaplaceSolver::factorize(double shift) {
  if (!analyzed_) {
    ldlt_.analyzePattern(H_);
    analyzed_ = true;
  }
  ldlt_.setShift(shift);
  ldlt_.factorize(H_);
  if (ldlt_.info() != Eigen::Success) return false;
  const Eigen::VectorXd& d = ldlt_.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0) || !std::isfinite(d[i])) return false;
  }
  return true;
}

InnerResult LaplaceSolver::inner_mode(const Eigen::VectorXd& theta, const Eigen::VectorXd& start) {
  const int nu = problem_->n_inner();
  if (start.size() != nu) throw Error(ErrorCode::LayoutMismatch, "inner start has the wrong length");
  InnerResult res;
  res.mode = start;
  Eigen::VectorXd& u = res.mode;

  auto finish = [&](double f, double gnorm, int iter) {
    res.f = f;
    res.grad_norm = gnorm;
    res.iterations = iter;
    if (nu > 0) {
      if (!factorize(0.0)) {
        throw Error(ErrorCode::IndefiniteHessian, "inner Hessian is not positive definite at the mode");
      }
      res.logdet = ldlt_.vectorD().array().log().sum();
      res.nnz_factor = static_cast<int>(ldlt_.matrixL().nestedExpression().nonZeros()) + nu;
    }
    return res;
  };

  if (nu == 0) return finish(evaluate(u, theta, 0, false), 0.0, 0);

  double last_full_gnorm = std::numeric_limits<double>::infinity();
  int stalls = 0;
  for (int iter = 0; iter < options_.max_iter; ++iter) {
    const double f = evaluate(u, theta, 2, false);
    const double gnorm = g_u_.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(f) || !std::isfinite(gnorm)) {
      throw Error(ErrorCode::InnerDivergence, "non-finite objective during inner optimization");
    }
    if (gnorm <= options_.grad_tol) {
      // Extra Newton steps sharpen the mode: log det H, and so the
      // marginal, moves linearly with any error left in u.
      double fc = f, gc = gnorm;
      for (int k = 0; k < 3 && gc > 1e-14 * std::max(1.0, std::abs(fc)); ++k) {
        if (!factorize(0.0)) break;
        const Eigen::VectorXd u2 = u - ldlt_.solve(g_u_);
        const double f2 = evaluate(u2, theta, 2, false);
        const double g2 = g_u_.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(f2) || !(g2 < 0.5 * gc) || f2 > fc + 1e-12 * std::max(1.0, std::abs(fc))) {
          evaluate(u, theta, 2, false);
          break;
        }
        u = u2;
        fc = f2;
        gc = g2;
      }
      return finish(fc, gc, iter);
    }

    double shift = 0.0;
    double max_diag = 0.0;
    for (int i = 0; i < nu; ++i) max_diag = std::max(max_diag, std::abs(H_.coeff(i, i)));
    while (!factorize(shift)) {
      shift = shift == 0.0 ? 1e-8 * std::max(1.0, max_diag) : shift * 10.0;
      if (shift > 1e12 * std::max(1.0, max_diag)) {
        throw Error(ErrorCode::InnerDivergence, "could not regularize the inner Hessian");
      }
    }
    const Eigen::VectorXd step = -ldlt_.solve(g_u_);
    const double slope = g_u_.dot(step);
    if (shift == 0.0 && -slope <= 1e-10 * std::max(1.0, std::abs(f))) {
      // Near the mode the objective cannot resolve further decrease; take
      // full Newton steps and watch the gradient instead.
      if (gnorm >= 0.5 * last_full_gnorm) {
        // Gradient at its rounding floor: the Newton decrement is already negligible.
        if (++stalls >= 3) return finish(f, gnorm, iter);
      }
      last_full_gnorm = gnorm;
      u += step;
      continue;
    }
    const Eigen::VectorXd g_old = g_u_;
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd trial = u + t * step;
      const double ft = evaluate(trial, theta, 0, false);
      if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope) {
        u = trial;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Rounding can defeat the sufficient decrease test close to the mode.
      const Eigen::VectorXd trial = u + step;
      const double ft = evaluate(trial, theta, 1, false);
      if (std::isfinite(ft) && g_u_.lpNorm<Eigen::Infinity>() < g_old.lpNorm<Eigen::Infinity>() &&
          ft <= f + 1e-10 * std::max(1.0, std::abs(f))) {
        u = trial;
      } else {
        throw Error(ErrorCode::InnerDivergence, "inner line search failed");
      }
    }
  }
  const double f = evaluate(u, theta, 2, false);
  const double gnorm = g_u_.lpNorm<Eigen::Infinity>();
  if (std::isfinite(f) && gnorm <= options_.grad_tol) return finish(f, gnorm, options_.max_iter);
  throw Error(ErrorCode::InnerDivergence,
              "inner optimization did not converge in " + std::to_string(options_.max_iter) +
                  " iterations (gradient " + std::to_string(gnorm) + ")");
}

double LaplaceSolver::marginal(const Eigen::VectorXd& theta, const Eigen::VectorXd& start,
                               InnerResult* inner) {
  InnerResult r = inner_mode(theta, start);
  const double v = r.f + 0.5 * r.logdet - gaussian_log_norm(problem_->n_inner());
  if (inner) *inner = std::move(r);
  return v;
}

LaplaceSolver::Gradient LaplaceSolver::marginal_with_gradient(const Eigen::VectorXd& theta,
                                                              const Eigen::VectorXd& start) {
  Gradient out;
  out.inner = inner_mode(theta, start);
  const int nu = problem_->n_inner();
  out.value = out.inner.f + 0.5 * out.inner.logdet - gaussian_log_norm(nu);
  if (nu == 0) {
    evaluate(out.inner.mode, theta, 1, true);
    out.grad = g_t_;
    return out;
  }
  compute_selected_inverse();
  evaluate(out.inner.mode, theta, 3, true);
  const Eigen::VectorXd y = ldlt_.solve(g_u_ + w_);
  out.grad = g_t_ + trace_t_ - H_ut_.transpose() * y;
  return out;
}

Eigen::VectorXd LaplaceSolver::solve(const Eigen::VectorXd& rhs) const {
  if (problem_->n_inner() == 0) return Eigen::VectorXd(0);
  return ldlt_.solve(rhs);
}

const std::vector<double>& LaplaceSolver::selected_inverse() {
  compute_selected_inverse();
  return p_slots_;
}

void LaplaceSolver::compute_selected_inverse() {
  const int n = problem_->n_inner();
  if (n == 0) return;
  const auto& L = ldlt_.matrixL().nestedExpression();
  const int* Lp = L.outerIndexPtr();
  const int* Li = L.innerIndexPtr();
  const double* Lx = L.valuePtr();
  const Eigen::VectorXd& d = ldlt_.vectorD();
  const auto& perm = ldlt_.permutationP().indices();

  auto find_l = [&](int r, int c) {
    const int* pos = std::lower_bound(Li + Lp[c], Li + Lp[c + 1], r);
    if (pos == Li + Lp[c + 1] || *pos != r) return -1;
    return static_cast<int>(pos - Li);
  };

  if (!selinv_mapped_) {
    const int nnz = static_cast<int>(H_.nonZeros());
    slot_to_l_.assign(static_cast<size_t>(nnz), -1);
    slot_diag_.assign(static_cast<size_t>(nnz), -1);
    for (int c = 0; c < n; ++c) {
      for (int s = H_.outerIndexPtr()[c]; s < H_.outerIndexPtr()[c + 1]; ++s) {
        const int r = H_.innerIndexPtr()[s];
        const int pr = perm[r];
        const int pc = perm[c];
        if (pr == pc) {
          slot_diag_[static_cast<size_t>(s)] = pr;
        } else {
          const int pos = find_l(std::max(pr, pc), std::min(pr, pc));
          if (pos < 0) throw Error(ErrorCode::InvariantViolation, "Hessian entry missing from the factor");
          slot_to_l_[static_cast<size_t>(s)] = pos;
        }
      }
    }
    selinv_mapped_ = true;
  }

  zinv_l_.assign(static_cast<size_t>(Lp[n]), 0.0);
  zinv_diag_.assign(static_cast<size_t>(n), 0.0);
  auto z_at = [&](int i, int k) -> double {
    if (i == k) return zinv_diag_[static_cast<size_t>(i)];
    const int pos = find_l(std::max(i, k), std::min(i, k));
    return zinv_l_[static_cast<size_t>(pos)];
  };
  for (int j = n - 1; j >= 0; --j) {
    for (int p = Lp[j]; p < Lp[j + 1]; ++p) {
      const int i = Li[p];
      double s = 0.0;
      for (int q = Lp[j]; q < Lp[j + 1]; ++q) s += Lx[q] * z_at(i, Li[q]);
      zinv_l_[static_cast<size_t>(p)] = -s;
    }
    double s = 0.0;
    for (int p = Lp[j]; p < Lp[j + 1]; ++p) s += Lx[p] * zinv_l_[static_cast<size_t>(p)];
    zinv_diag_[static_cast<size_t>(j)] = 1.0 / d[j] - s;
  }
  for (size_t s = 0; s < p_slots_.size(); ++s) {
    p_slots_[s] = slot_diag_[s] >= 0 ? zinv_diag_[static_cast<size_t>(slot_diag_[s])]
                                     : zinv_l_[static_cast<size_t>(slot_to_l_[s])];
  }
}

}  // namespace samspline
