#pragma once

// Laplace approximation of a marginal likelihood over inner (random) variables
// for objectives written as a sum of small local terms.
//
// The objective is f(u, theta) = sum_t f_t(L_t [u; theta]), where each term
// sees a handful of local variables, each a sparse linear combination of the
// global variables. The negative log marginal likelihood is
//
//   V(theta) = f(u*, theta) + 1/2 log det H(u*, theta) - n_u/2 log(2 pi),
//
// with u* the inner mode and H the inner Hessian. Its gradient uses third
// derivatives of the terms contracted with the selected inverse of H.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "samspline/autodiff.hpp"
#include "samspline/error.hpp"

namespace samspline {

struct VarRef {
  int index = 0;  // global index: inner variables first, then outer
  double coef = 1.0;
};

// Local variable of a term: sum of coef * z[index]. All refs of one local
// variable must be either inner or outer.
using LocalVar = std::vector<VarRef>;

// Derivatives of one term with respect to its k local variables. H is
// required for every pair with at least one inner variable, T for every
// triple whose first two variables are inner. Storage is row-major.
struct LocalDerivs {
  int k = 0;
  double value = 0.0;
  std::vector<double> g;
  std::vector<double> H;
  std::vector<double> T;

  void reset(int size, int order);
  double& h(int i, int j) { return H[static_cast<size_t>(i * k + j)]; }
  double& t(int i, int j, int m) { return T[static_cast<size_t>((i * k + j) * k + m)]; }
};

class Term {
 public:
  virtual ~Term() = default;
  virtual int size() const = 0;
  // order 0: value; 1: + gradient; 2: + Hessian; 3: + third derivatives.
  virtual void evaluate(std::span<const double> x, int order, LocalDerivs& out) const = 0;
};

// Term whose derivatives come from nested dual numbers. F must provide
// template <class T> T operator()(const std::array<T, N>&) const.
template <int N, class F>
class AutoTerm final : public Term {
 public:
  explicit AutoTerm(F f) : f_(std::move(f)) {}
  int size() const override { return N; }

  void evaluate(std::span<const double> x, int order, LocalDerivs& out) const override {
    using D1 = ad::Dual<double, N>;
    using D2 = ad::Dual<D1, N>;
    using D3 = ad::Dual<D2, N>;
    out.reset(N, order);
    if (order == 0) {
      std::array<double, N> v;
      for (int i = 0; i < N; ++i) v[i] = x[i];
      out.value = f_(v);
    } else if (order == 1) {
      std::array<D1, N> v;
      for (int i = 0; i < N; ++i) {
        v[i].v = x[i];
        v[i].d[i] = 1.0;
      }
      const D1 r = f_(v);
      out.value = r.v;
      for (int i = 0; i < N; ++i) out.g[i] = r.d[i];
    } else if (order == 2) {
      std::array<D2, N> v;
      for (int i = 0; i < N; ++i) {
        v[i].v.v = x[i];
        v[i].v.d[i] = 1.0;
        v[i].d[i].v = 1.0;
      }
      const D2 r = f_(v);
      out.value = r.v.v;
      for (int i = 0; i < N; ++i) {
        out.g[i] = r.d[i].v;
        for (int j = 0; j < N; ++j) out.h(i, j) = r.d[i].d[j];
      }
    } else {
      std::array<D3, N> v;
      for (int i = 0; i < N; ++i) {
        v[i].v.v.v = x[i];
        v[i].v.v.d[i] = 1.0;
        v[i].v.d[i].v = 1.0;
        v[i].d[i].v.v = 1.0;
      }
      const D3 r = f_(v);
      out.value = r.v.v.v;
      for (int i = 0; i < N; ++i) {
        out.g[i] = r.d[i].v.v;
        for (int j = 0; j < N; ++j) {
          out.h(i, j) = r.d[i].d[j].v;
          for (int m = 0; m < N; ++m) out.t(i, j, m) = r.d[i].d[j].d[m];
        }
      }
    }
  }

 private:
  F f_;
};

template <int N, class F>
std::unique_ptr<Term> make_auto_term(F f) {
  return std::make_unique<AutoTerm<N, F>>(std::move(f));
}

class LaplaceProblem {
 public:
  LaplaceProblem(int n_inner, int n_outer);
  LaplaceProblem(LaplaceProblem&&) = default;
  LaplaceProblem& operator=(LaplaceProblem&&) = default;

  int n_inner() const { return n_inner_; }
  int n_outer() const { return n_outer_; }

  void add_term(std::unique_ptr<Term> term, std::vector<LocalVar> vars);
  // Builds the Hessian sparsity structure; no terms may be added afterwards.
  void finalize();
  bool finalized() const { return finalized_; }

  // f(u, theta).
  double value(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;

  struct Entry {
    std::unique_ptr<Term> term;
    std::vector<LocalVar> vars;
    std::vector<bool> inner;  // per local variable
    struct Pair {
      int local;   // i * k + j
      int slot;    // index into the lower-triangular Hessian values
      double coef;
      bool lower;  // contributes to H when the global row >= global column
    };
    std::vector<Pair> pairs;  // ordered inner-inner local pairs
    int max_refs = 1;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  // Lower-triangular inner Hessian pattern (column-major), values unset.
  const Eigen::SparseMatrix<double>& pattern() const { return pattern_; }

 private:
  int n_inner_ = 0;
  int n_outer_ = 0;
  bool finalized_ = false;
  std::vector<Entry> entries_;
  Eigen::SparseMatrix<double> pattern_;
};

struct InnerOptions {
  double grad_tol = 1e-8;
  int max_iter = 100;
};

struct InnerResult {
  Eigen::VectorXd mode;
  double f = 0.0;           // f(u*, theta)
  double logdet = 0.0;      // log det H(u*, theta)
  double grad_norm = 0.0;   // inf-norm of the inner gradient at the mode
  int iterations = 0;
  int nnz_factor = 0;
};

// Evaluation workspace for one LaplaceProblem. Not thread safe; use one per
// thread. The problem must outlive the solver.
class LaplaceSolver {
 public:
  explicit LaplaceSolver(const LaplaceProblem& problem, InnerOptions options = {});

  const LaplaceProblem& problem() const { return *problem_; }
  const InnerOptions& options() const { return options_; }
  void set_options(const InnerOptions& options) { options_ = options; }

  // Newton iterations from `start`. Throws InnerDivergence or IndefiniteHessian.
  InnerResult inner_mode(const Eigen::VectorXd& theta, const Eigen::VectorXd& start);

  // Negative log marginal likelihood V(theta).
  double marginal(const Eigen::VectorXd& theta, const Eigen::VectorXd& start,
                  InnerResult* inner = nullptr);

  struct Gradient {
    double value = 0.0;
    Eigen::VectorXd grad;  // dV/dtheta
    InnerResult inner;
  };
  Gradient marginal_with_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& start);

  // Valid after inner_mode/marginal*: H^{-1} rhs at the last mode.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  // Valid after marginal_with_gradient: d^2 f / du dtheta at the mode.
  const Eigen::MatrixXd& cross_hessian() const { return H_ut_; }

  // Selected inverse of the current factorization on the Hessian pattern,
  // indexed like pattern().valuePtr(). Exposed for testing.
  const std::vector<double>& selected_inverse();

 private:
  // Accumulates derivatives at z = [u; theta] up to `order`. With
  // want_outer, also the outer gradient, the cross Hessian and (order 3) the
  // trace contractions, which need selected_inverse() to be current.
  double evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& theta, int order,
                  bool want_outer);
  bool factorize(double shift);
  void compute_selected_inverse();

  const LaplaceProblem* problem_;
  InnerOptions options_;
  Eigen::VectorXd z_;
  LocalDerivs local_;
  std::vector<double> xloc_;
  std::vector<double> pl_;
  // accumulated results
  Eigen::VectorXd g_u_;
  Eigen::VectorXd g_t_;
  Eigen::SparseMatrix<double> H_;
  Eigen::MatrixXd H_ut_;
  Eigen::VectorXd w_;        // 1/2 tr(P dH/du_k)
  Eigen::VectorXd trace_t_;  // 1/2 tr(P dH/dtheta_m)
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  bool analyzed_ = false;
  // selected inverse bookkeeping
  std::vector<double> zinv_l_;     // on the factor's strict lower pattern
  std::vector<double> zinv_diag_;  // permuted diagonal
  std::vector<int> slot_to_l_;     // hessian slot -> factor position (-1 for diagonal)
  std::vector<int> slot_diag_;     // hessian slot -> permuted diagonal index
  std::vector<double> p_slots_;    // selected inverse on the Hessian pattern
  bool selinv_mapped_ = false;
};

// log of the Gaussian normalizing constant times -1, used by toys and tests.
inline double gaussian_log_norm(int n) { return 0.5 * n * 1.8378770664093454836; }

}  // namespace samspline
