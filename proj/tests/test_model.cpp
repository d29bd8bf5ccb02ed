#include <doctest.h>

#include <cmath>
#include <random>

#include "samspline/fit.hpp"
#include "samspline/model.hpp"
#include "samspline/model_terms.hpp"
#include "sim_support.hpp"

using namespace samspline;

namespace {

// Same density as FIncrementTerm written directly on dual numbers.
struct FIncrementGeneric {
  std::vector<int> groups;
  template <class T>
  T operator()(const std::array<T, 7>& x) const {
    using ad::exp;
    using ad::log;
    const int A = 4;
    const double lo = -1.0 / (A - 1);
    const T sig = 1.0 / (1.0 + exp(-x[6]));
    const T rho = lo + (1.0 - lo) * sig;
    const T c = rho / (1.0 + (A - 1) * rho);
    std::array<T, 4> e;
    T sum_log_sd(0.0);
    T sum_e(0.0);
    for (int a = 0; a < A; ++a) {
      const T ls = x[static_cast<size_t>(4 + groups[static_cast<size_t>(a)])];
      e[static_cast<size_t>(a)] = x[static_cast<size_t>(a)] * exp(-ls);
      sum_log_sd += ls;
      sum_e += e[static_cast<size_t>(a)];
    }
    T ee(0.0);
    for (int a = 0; a < A; ++a) ee += e[static_cast<size_t>(a)] * e[static_cast<size_t>(a)];
    const T quad = (ee - c * sum_e * sum_e) / (1.0 - rho);
    const T logdet = (A - 1) * log(1.0 - rho) + log(1.0 + (A - 1) * rho);
    return 0.5 * quad + sum_log_sd + 0.5 * logdet + 0.5 * A * kLog2Pi;
  }
};

StockData small_stock(int ages, int years, std::uint64_t seed) {
  return simulate(testsupport::make_truth(ages, years), seed).data;
}

}  // namespace

TEST_CASE("hand-coded F increment derivatives match dual numbers") {
  const std::vector<int> groups{0, 0, 1, 1};
  FIncrementTerm hand(groups);
  auto generic = make_auto_term<7>(FIncrementGeneric{groups});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> x(7);
    for (auto& v : x) v = 0.5 * nd(rng);
    LocalDerivs a, b;
    hand.evaluate(x, 3, a);
    generic->evaluate(x, 3, b);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
    for (int i = 0; i < 7; ++i) CHECK(a.g[i] == doctest::Approx(b.g[i]).epsilon(1e-10));
    for (int i = 0; i < 7; ++i) {
      for (int j = 0; j < 7; ++j) {
        if (i >= 4 && j >= 4) continue;  // outer-outer block is not needed
        CHECK(a.h(i, j) == doctest::Approx(b.h(i, j)).epsilon(1e-10).scale(1.0));
        if (i < 4 && j < 4) {
          for (int m = 0; m < 7; ++m) CHECK(a.t(i, j, m) == doctest::Approx(b.t(i, j, m)).epsilon(1e-9).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("assembled problem equals the standalone densities plus the catchability prior") {
  const StockData data = small_stock(5, 12, 11);
  StockModel m(data, ModelConfig{});
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::VectorXd u = m.initial_inner();
  Eigen::VectorXd t = m.initial_outer();
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] += 0.1 * nd(rng);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] += 0.1 * nd(rng);
  double prior = 0.0;
  for (const auto& b : m.param_map().blocks()) {
    if (b.family != BlockFamily::Catchability || !b.spline) continue;
    PenaltyPriorTerm term(b.spline->S_tilde[0], b.spline->rank[0], b.spline->logdet[0]);
    prior += term.value(m.catchability_coefs(u).segment(b.offset, b.n_coef), t[*m.idx_log_lambda_catchability()],
                        nullptr, nullptr);
  }
  CHECK(m.problem().value(u, t) == doctest::Approx(m.joint_nll(u, t) + prior).epsilon(1e-12));
}

TEST_CASE("masked observations leave joint_nll unchanged") {
  StockData data = small_stock(4, 10, 2);
  StockModel m1(data, ModelConfig{});
  data.obs.push_back({1995, 1, 1, 123.0, true});
  std::sort(data.obs.begin(), data.obs.end(), [](const ObsRecord& a, const ObsRecord& b) {
    return std::tie(a.fleet, a.year, a.age, a.missing) < std::tie(b.fleet, b.year, b.age, b.missing);
  });
  const Eigen::VectorXd u = m1.initial_inner(), t = m1.initial_outer();
  const double v1 = m1.joint_nll(u, t);
  // the duplicate masked record does not enter the likelihood
  double v2 = process_nll(m1.states(u), m1.process_params(t), m1.natural_mortality()) +
              obs_nll(m1.states(u), m1.obs_params(u, t), data);
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-14));
}

TEST_CASE("outer gradient matches central differences") {
  const StockData data = small_stock(4, 15, 7);
  ModelConfig cfg;
  cfg.optimizer.inner_tol = 1e-11;
  StockModel m(data, cfg);
  OuterObjective obj(m);
  Eigen::VectorXd t = m.initial_outer();
  Eigen::VectorXd g;
  const double v = obj.evaluate(t, &g);
  CHECK(std::isfinite(v));
  for (int i = 0; i < m.n_outer(); ++i) {
    const double h = 1e-4 * std::max(1.0, std::abs(t[i]));
    Eigen::VectorXd tp = t, tm = t;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (obj.evaluate(tp, nullptr) - obj.evaluate(tm, nullptr)) / (2 * h);
    INFO(m.outer_names()[static_cast<size_t>(i)]);
    CHECK(std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
  }
}

TEST_CASE("fit converges on a simulated 6-age 30-year stock") {
  const StockData data = small_stock(6, 30, 1);
  const FitResult r = fit(data, ModelConfig{});
  INFO(r.reason);
  CHECK(r.converged);
  CHECK(r.gradient_norm <= 1e-4);
  CHECK(r.objective <= r.objective_initial);
  MESSAGE("runtime " << r.runtime_seconds << " s, iterations " << r.iterations);
}
