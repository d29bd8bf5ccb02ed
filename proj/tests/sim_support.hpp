#pragma once

// Simulated stocks shared by the tests.

#include <cmath>

#include "samspline/population_model.hpp"

namespace testsupport {

inline samspline::SimulationTruth make_truth(int n_ages, int n_years, int n_surveys = 2) {
  using Eigen::VectorXd;
  samspline::SimulationTruth t;
  t.ages = {1, n_ages};
  t.first_year = 1990;
  t.n_years = n_years;
  t.process.sd_logR = 0.4;
  t.process.sd_logN = 0.15;
  t.process.sd_logF = {0.15};
  t.process.rho_F = 0.7;
  const int A = n_ages;
  VectorXd x(A);
  for (int a = 0; a < A; ++a) x[a] = std::log(a + 2.0);
  const double xm = 0.5 * (x[0] + x[A - 1]);
  t.log_sigma.resize(A);
  t.logN0.resize(A);
  t.logF0.resize(A);
  for (int a = 0; a < A; ++a) {
    // catch sd: smallest at intermediate ages
    t.log_sigma[a] = std::log(0.15) + 1.5 * (x[a] - xm) * (x[a] - xm);
    t.logN0[a] = 11.0 - 0.6 * a;
    t.logF0[a] = std::log(0.35) - std::log1p(std::exp(-1.8 * (a - 1.5)));
  }
  t.log_omega.resize(n_surveys, A);
  t.log_q.resize(n_surveys, A);
  for (int j = 0; j < n_surveys; ++j) {
    samspline::SurveyDesign s;
    s.timing = j == 0 ? 0.25 : 0.75;
    s.min_age = 1;
    s.max_age = A;
    s.first_year = t.first_year + j;
    s.last_year = t.first_year + n_years - 1;
    t.surveys.push_back(s);
    for (int a = 0; a < A; ++a) {
      t.log_omega(j, a) = std::log(0.25 + 0.05 * j) + 1.0 * (x[a] - xm) * (x[a] - xm);
      t.log_q(j, a) = -7.0 - 0.5 * j + 1.2 * (x[a] - x[0]) - 0.6 * (x[a] - x[0]) * (x[a] - x[0]);
    }
  }
  auto fill = [&](auto fn) {
    VectorXd v(A);
    for (int a = 0; a < A; ++a) v[a] = fn(a);
    return v;
  };
  t.natural_mortality = VectorXd::Constant(A, 0.2);
  t.stock_weight = fill([](int a) { return 0.05 * std::pow(a + 1.0, 1.5); });
  t.catch_weight = fill([](int a) { return 0.06 * std::pow(a + 1.0, 1.5); });
  t.maturity = fill([](int a) { return 1.0 / (1.0 + std::exp(-2.0 * (a - 1.5))); });
  t.prop_f = VectorXd::Zero(A);
  t.prop_m = VectorXd::Zero(A);
  return t;
}

}  // namespace testsupport
