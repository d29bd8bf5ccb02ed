#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "samspline/error.hpp"
#include "samspline/population_model.hpp"
#include "sim_support.hpp"

using namespace samspline;

namespace {

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * M_PI);
}

// One-year stock with constant aux tables.
StockData tiny_stock(int n_ages, double M, double maturity, double weight, double prop) {
  StockData s;
  s.ages = {1, n_ages};
  s.years = {2000};
  FleetMeta c;
  c.fleet = 0;
  c.kind = FleetKind::Catch;
  s.fleets = {c};
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, n_ages);
  s.aux[static_cast<int>(AuxKind::NaturalMortality)] = AuxTable(AuxKind::NaturalMortality, 2000, M * one);
  s.aux[static_cast<int>(AuxKind::StockWeight)] = AuxTable(AuxKind::StockWeight, 2000, weight * one);
  s.aux[static_cast<int>(AuxKind::CatchWeight)] = AuxTable(AuxKind::CatchWeight, 2000, weight * one);
  s.aux[static_cast<int>(AuxKind::Maturity)] = AuxTable(AuxKind::Maturity, 2000, maturity * one);
  s.aux[static_cast<int>(AuxKind::PropFBeforeSpawn)] = AuxTable(AuxKind::PropFBeforeSpawn, 2000, prop * one);
  s.aux[static_cast<int>(AuxKind::PropMBeforeSpawn)] = AuxTable(AuxKind::PropMBeforeSpawn, 2000, prop * one);
  return s;
}

// Process density written out directly: scalar Gaussian terms for N, a dense
// multivariate Gaussian for the F increments.
double process_nll_oracle(const LatentStates& st, const ProcessParams& p, double M) {
  const Eigen::Index Y = st.logN.rows(), A = st.logN.cols();
  double ll = 0;
  for (Eigen::Index a = 0; a < A; ++a) ll += normal_logpdf(st.logN(0, a), 0, 10) + normal_logpdf(st.logF(0, a), 0, 10);
  Eigen::MatrixXd S(A, A);
  for (Eigen::Index i = 0; i < A; ++i) {
    for (Eigen::Index j = 0; j < A; ++j) {
      const double si = p.sd_logF[static_cast<size_t>(p.f_groups.empty() ? 0 : p.f_groups[static_cast<size_t>(i)])];
      const double sj = p.sd_logF[static_cast<size_t>(p.f_groups.empty() ? 0 : p.f_groups[static_cast<size_t>(j)])];
      S(i, j) = (i == j ? 1.0 : p.rho_F) * si * sj;
    }
  }
  const Eigen::MatrixXd Si = S.inverse();
  for (Eigen::Index y = 1; y < Y; ++y) {
    ll += normal_logpdf(st.logN(y, 0), st.logN(y - 1, 0), p.sd_logR);
    for (Eigen::Index a = 1; a < A; ++a) {
      double n = std::exp(st.logN(y - 1, a - 1) - std::exp(st.logF(y - 1, a - 1)) - M);
      if (a == A - 1) n += std::exp(st.logN(y - 1, a) - std::exp(st.logF(y - 1, a)) - M);
      ll += normal_logpdf(st.logN(y, a), std::log(n), p.sd_logN);
    }
    const Eigen::VectorXd d = (st.logF.row(y) - st.logF.row(y - 1)).transpose();
    ll += -0.5 * d.dot(Si * d) - 0.5 * std::log(S.determinant()) - 0.5 * static_cast<double>(A) * std::log(2 * M_PI);
  }
  return -ll;
}

LatentStates random_states(int Y, int A, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  LatentStates st{Eigen::MatrixXd(Y, A), Eigen::MatrixXd(Y, A)};
  for (int y = 0; y < Y; ++y) {
    for (int a = 0; a < A; ++a) {
      st.logN(y, a) = 9 - 0.5 * a + 0.3 * z(rng);
      st.logF(y, a) = -1.5 + 0.3 * z(rng);
    }
  }
  return st;
}

}  // namespace

TEST_CASE("survival step") {
  Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  Eigen::Vector3d N(100, 50, 20);
  Eigen::Vector3d noF = Eigen::Vector3d::Constant(-1e3);  // F = exp(-1000) is zero in double
  Eigen::VectorXd next = survival_step(N.array().log(), noF, zero);
  CHECK(std::isnan(next[0]));
  CHECK(std::exp(next[1]) == doctest::Approx(100));
  CHECK(std::exp(next[2]) == doctest::Approx(70));
  // with no mortality the older ages keep the total
  CHECK(std::exp(next[1]) + std::exp(next[2]) == doctest::Approx(N.sum()));

  const Eigen::Vector3d N2(1000, 500, 200);
  const Eigen::Vector3d F = Eigen::Vector3d::Constant(std::log(0.2)), M = Eigen::Vector3d::Constant(0.2);
  next = survival_step(N2.array().log(), F, M);
  CHECK(std::exp(next[1]) == doctest::Approx(670.320046));
  CHECK(std::exp(next[2]) == doctest::Approx(469.224032));

  // empty second-to-last age: plus group only decays
  const Eigen::Vector3d N3(1000, 0, 200);
  next = survival_step(N3.array().log(), F, M);
  CHECK(std::exp(next[2]) == doctest::Approx(200 * std::exp(-0.4)));

  CHECK_THROWS_AS(survival_step(Eigen::Vector3d::Zero(), Eigen::Vector2d::Zero(), Eigen::Vector3d::Zero()), Error);
}

TEST_CASE("recruitment random walk") {
  CHECK(recruitment_mean(5.0) == 5.0);
  const double nll = gaussian_nll(5.6, recruitment_mean(5.0), std::log(0.6));
  CHECK(-nll == doctest::Approx(normal_logpdf(0.6, 0, 0.6)));
  // two steps: the sum of independent increments has variance 2 sd^2
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0, 0.6);
  double ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double r = recruitment_mean(recruitment_mean(0.0) + z(rng)) + z(rng);
    ss += r * r;
  }
  CHECK(ss / n == doctest::Approx(2 * 0.36).epsilon(0.01));
}

TEST_CASE("catch and survey means") {
  CHECK(!catch_mean_log(std::log(1000.0), -INFINITY, 0.2).has_value());
  CHECK(std::exp(*catch_mean_log(std::log(1000.0), std::log(0.5), 0.5)) == doctest::Approx(316.0602794));
  CHECK(std::exp(*catch_mean_log(std::log(1000.0), std::log(50.0), 0.2)) ==
        doctest::Approx(1000 * 50 / 50.2 * (1 - std::exp(-50.2))).epsilon(1e-12));
  CHECK(std::abs(std::exp(*catch_mean_log(std::log(1000.0), std::log(1e9), 0.2)) - 1000) < 1e-8 * 1000);
  // tiny F: expected catch is F/(F+M)(1-e^-(F+M)) N without cancellation
  const double F = 1e-12;
  CHECK(std::exp(*catch_mean_log(0.0, std::log(F), 0.3)) ==
        doctest::Approx(F / (F + 0.3) * -std::expm1(-(F + 0.3))).epsilon(1e-12));

  CHECK(survey_mean_log(2.0, std::log(0.3), 0.2, 0.0, -1.0) == doctest::Approx(1.0));
  CHECK(survey_mean_log(1.0, std::log(0.8), 0.2, 0.5, 0.0) == doctest::Approx(0.5));
  for (double a : {0.1, 2.0, 5.0}) {
    CHECK(survey_mean_log(a, -1, 0.2, 0.3, std::log(2.0)) - survey_mean_log(a, -1, 0.2, 0.3, 0.0) ==
          doctest::Approx(std::log(2.0)));
  }
}

TEST_CASE("process density") {
  const int A = 5;
  ProcessParams p;
  p.sd_logR = 0.6;
  p.sd_logN = 0.2;
  p.sd_logF = {0.3};
  p.rho_F = 0.0;

  SUBCASE("on the deterministic trajectory only the constants remain") {
    LatentStates st{Eigen::MatrixXd(4, A), Eigen::MatrixXd(4, A)};
    for (int a = 0; a < A; ++a) {
      st.logN(0, a) = 8 - a;
      st.logF(0, a) = -1.2;
    }
    const Eigen::VectorXd M = Eigen::VectorXd::Constant(A, 0.2);
    for (int y = 1; y < 4; ++y) {
      const Eigen::VectorXd n = survival_step(st.logN.row(y - 1).transpose(), st.logF.row(y - 1).transpose(), M);
      st.logN.row(y) = n.transpose();
      st.logN(y, 0) = st.logN(y - 1, 0);
      st.logF.row(y) = st.logF.row(y - 1);
    }
    for (double rho : {0.0, 0.6}) {
      p.rho_F = rho;
      double first = 0;
      for (int a = 0; a < A; ++a) first -= normal_logpdf(st.logN(0, a), 0, 10) + normal_logpdf(st.logF(0, a), 0, 10);
      const double log_det =
          2 * A * std::log(0.3) + (A - 1) * std::log(1 - rho) + std::log(1 + (A - 1) * rho);
      const double per_year = std::log(0.6) + (A - 1) * std::log(0.2) + 0.5 * log_det + A * std::log(2 * M_PI);
      const double nll = process_nll(st, p, Eigen::MatrixXd::Constant(4, A, 0.2));
      CHECK(nll == doctest::Approx(first + 3 * per_year).epsilon(1e-12));
    }
  }
  SUBCASE("random states against the direct densities") {
    std::mt19937_64 rng(5);
    for (double rho : {0.0, 0.4, -0.2}) {
      p.rho_F = rho;
      for (int rep = 0; rep < 3; ++rep) {
        const LatentStates st = random_states(6, A, rng);
        CHECK(process_nll(st, p, Eigen::MatrixXd::Constant(6, A, 0.2)) ==
              doctest::Approx(process_nll_oracle(st, p, 0.2)).epsilon(1e-11));
      }
    }
    // grouped F sds
    p.rho_F = 0.3;
    p.sd_logF = {0.3, 0.1};
    p.f_groups = {0, 0, 1, 1, 1};
    const LatentStates st = random_states(6, A, rng);
    CHECK(process_nll(st, p, Eigen::MatrixXd::Constant(6, A, 0.2)) ==
          doctest::Approx(process_nll_oracle(st, p, 0.2)).epsilon(1e-11));
  }
  SUBCASE("one year holds only the first-year priors") {
    std::mt19937_64 rng(6);
    const LatentStates st = random_states(1, A, rng);
    double oracle = 0;
    for (int a = 0; a < A; ++a) oracle -= normal_logpdf(st.logN(0, a), 0, 10) + normal_logpdf(st.logF(0, a), 0, 10);
    CHECK(process_nll(st, p, Eigen::MatrixXd::Constant(1, A, 0.2)) == doctest::Approx(oracle).epsilon(1e-13));
  }
  SUBCASE("parameter checks") {
    ProcessParams bad = p;
    bad.rho_F = -0.3;  // below -1/(A-1) for A = 5
    CHECK_THROWS_AS(bad.validate(A), Error);
    bad = p;
    bad.sd_logN = 0;
    CHECK_THROWS_AS(bad.validate(A), Error);
    CHECK_NOTHROW(bad.validate(A, true));
    bad = p;
    bad.f_groups = {0, 0, 2, 0, 0};
    CHECK_THROWS_AS(bad.validate(A), Error);
  }
}

TEST_CASE("observation density") {
  const Simulation sim = simulate(testsupport::make_truth(4, 8), 12);
  const ObsParams op = obs_params_from_truth(testsupport::make_truth(4, 8));

  SUBCASE("all records missing") {
    StockData d = sim.data;
    for (auto& r : d.obs) r.missing = true;
    CHECK(obs_nll(sim.states, op, d) == 0.0);
  }
  SUBCASE("one record at its mean with unit sd, then twice") {
    StockData d = sim.data;
    for (auto& r : d.obs) r.missing = true;
    ObsRecord& r = d.obs.front();
    REQUIRE(r.fleet == 0);
    const int y = d.year_index(r.year), a = d.ages.index(r.age);
    r.missing = false;
    r.value = std::exp(*catch_mean_log(sim.states.logN(y, a), sim.states.logF(y, a), 0.2));
    ObsParams unit = op;
    unit.log_sigma.setZero();
    const double one = obs_nll(sim.states, unit, d);
    CHECK(one == doctest::Approx(0.5 * std::log(2 * M_PI)).epsilon(1e-12));
    d.obs.push_back(r);
    CHECK(obs_nll(sim.states, unit, d) == doctest::Approx(2 * one).epsilon(1e-14));
  }
  SUBCASE("record order does not matter") {
    StockData d = sim.data;
    std::mt19937_64 rng(2);
    std::shuffle(d.obs.begin(), d.obs.end(), rng);
    CHECK(obs_nll(sim.states, op, d) == doctest::Approx(obs_nll(sim.states, op, sim.data)).epsilon(1e-12));
  }
  SUBCASE("moving a value toward its mean lowers the density") {
    StockData d = sim.data;
    auto it = std::find_if(d.obs.begin(), d.obs.end(), [](const ObsRecord& r) { return r.fleet == 1; });
    const int y = d.year_index(it->year), a = d.ages.index(it->age);
    const double mean = survey_mean_log(sim.states.logN(y, a), sim.states.logF(y, a), 0.2, d.fleets[1].timing, op.log_q(0, a));
    double prev = INFINITY;
    for (double off : {2.0, 1.0, 0.5, 0.1, 0.0}) {
      it->value = std::exp(mean + off);
      const double v = obs_nll(sim.states, op, d);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("spawning stock biomass") {
  LatentStates st{Eigen::MatrixXd(1, 3), Eigen::MatrixXd(1, 3)};
  st.logN << std::log(1000.0), std::log(400.0), std::log(100.0);
  st.logF.setConstant(std::log(0.3));
  CHECK(ssb(st, tiny_stock(3, 0.2, 0.0, 1.0, 0.0))[0] == 0.0);
  CHECK(ssb(st, tiny_stock(3, 0.2, 1.0, 1.0, 0.0))[0] == doctest::Approx(1500));
  CHECK(ssb(st, tiny_stock(3, 0.2, 1.0, 1.0, 0.5))[0] == doctest::Approx(1500 * std::exp(-0.25)));

  LatentStates one{Eigen::MatrixXd::Constant(1, 2, std::log(1000.0)), Eigen::MatrixXd::Constant(1, 2, -1.0)};
  StockData s = tiny_stock(2, 0.2, 0.5, 2.0, 0.0);
  const double both = ssb(one, s)[0];
  CHECK(both == doctest::Approx(2 * 1000 * 2.0 * 0.5));
}

TEST_CASE("simulation") {
  const SimulationTruth t = testsupport::make_truth(4, 10);
  SUBCASE("same seed, same data") {
    CHECK(simulate(t, 7).data == simulate(t, 7).data);
    CHECK(simulate(t, 7).states.logN == simulate(t, 7).states.logN);
    CHECK(!(simulate(t, 7).data == simulate(t, 8).data));
  }
  SUBCASE("survey noise has the configured sd") {
    SimulationTruth small = testsupport::make_truth(3, 2, 1);
    const double omega = std::exp(small.log_omega(0, 1));
    std::vector<double> resid;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      const Simulation s = simulate(small, seed);
      for (const auto& r : s.data.obs) {
        if (r.fleet != 1 || r.age != 2 || r.year != small.first_year + 1) continue;
        const int y = s.data.year_index(r.year);
        const double mean = survey_mean_log(s.states.logN(y, 1), s.states.logF(y, 1), 0.2, small.surveys[0].timing,
                                            small.log_q(0, 1));
        resid.push_back(std::log(r.value) - mean);
      }
    }
    REQUIRE(resid.size() == 10000);
    double m = 0, ss = 0;
    for (double v : resid) m += v;
    m /= static_cast<double>(resid.size());
    for (double v : resid) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(resid.size() - 1));
    CHECK(std::abs(sd / omega - 1) < 0.02);
  }
  SUBCASE("invalid truth") {
    SimulationTruth bad = t;
    bad.process.sd_logN = -1;
    CHECK_THROWS_AS(simulate(bad, 1), Error);
  }
}
