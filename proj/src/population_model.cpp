#include "samspline/population_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "samspline/error.hpp"

namespace samspline {

void ProcessParams::validate(int n_ages, bool allow_zero) const {
  auto ok = [&](double s) { return allow_zero ? s >= 0 : s > 0; };
  if (!ok(sd_logR) || !ok(sd_logN)) {
    throw Error(ErrorCode::InvalidArgument, "process standard deviations must be positive");
  }
  if (sd_logF.empty()) throw Error(ErrorCode::InvalidArgument, "at least one F sd required");
  for (double s : sd_logF) {
    if (!ok(s)) throw Error(ErrorCode::InvalidArgument, "F sd must be positive");
  }
  if (!f_groups.empty()) {
    if (static_cast<int>(f_groups.size()) != n_ages) {
      throw Error(ErrorCode::InvalidArgument, "f_groups needs one entry per age");
    }
    for (int g : f_groups) {
      if (g < 0 || g >= static_cast<int>(sd_logF.size())) {
        throw Error(ErrorCode::InvalidArgument, "f_groups entry out of range");
      }
    }
  }
  const double lo = n_ages > 1 ? -1.0 / (n_ages - 1) : -1.0;
  if (!(rho_F > lo && rho_F < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "rho_F outside the positive-definite range");
  }
}

Eigen::VectorXd survival_step(const Eigen::VectorXd& logN_row, const Eigen::VectorXd& logF_row,
                              const Eigen::VectorXd& M_row) {
  const Eigen::Index A = logN_row.size();
  if (logF_row.size() != A || M_row.size() != A || A < 2) {
    throw Error(ErrorCode::InvalidArgument, "survival_step: inconsistent row lengths");
  }
  Eigen::VectorXd next(A);
  next(0) = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index a = 1; a + 1 < A; ++a) {
    next(a) = survival_mean(logN_row(a - 1), logF_row(a - 1), M_row(a - 1));
  }
  next(A - 1) = plus_group_mean(logN_row(A - 2), logF_row(A - 2), M_row(A - 2), logN_row(A - 1),
                                logF_row(A - 1), M_row(A - 1));
  return next;
}

std::optional<double> catch_mean_log(double logN, double logF, double M) {
  if (std::isinf(logF) && logF < 0) return std::nullopt;
  return baranov_log_catch(logN, logF, M);
}

double survey_mean_log(double logN, double logF, double M, double timing, double logQ) {
  return survey_log_mean(logN, logF, M, timing, logQ);
}

Eigen::MatrixXd f_increment_covariance(const ProcessParams& params, int n_ages) {
  Eigen::VectorXd sd(n_ages);
  for (int a = 0; a < n_ages; ++a) {
    const int g = params.f_groups.empty() ? 0 : params.f_groups[a];
    sd(a) = params.sd_logF[g];
  }
  Eigen::MatrixXd R = Eigen::MatrixXd::Constant(n_ages, n_ages, params.rho_F);
  R.diagonal().setOnes();
  return sd.asDiagonal() * R * sd.asDiagonal();
}

double process_nll(const LatentStates& states, const ProcessParams& params,
                   const Eigen::MatrixXd& M) {
  const Eigen::Index Y = states.logN.rows();
  const Eigen::Index A = states.logN.cols();
  const double log_diffuse = std::log(kDiffuseSd);
  double nll = 0.0;
  for (Eigen::Index a = 0; a < A; ++a) {
    nll += gaussian_nll(states.logN(0, a), 0.0, log_diffuse);
    nll += gaussian_nll(states.logF(0, a), 0.0, log_diffuse);
  }
  if (Y < 2) return nll;
  const double log_sd_R = std::log(params.sd_logR);
  const double log_sd_N = std::log(params.sd_logN);
  const Eigen::MatrixXd sigma = f_increment_covariance(params, static_cast<int>(A));
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  for (Eigen::Index y = 1; y < Y; ++y) {
    const Eigen::VectorXd pred =
        survival_step(states.logN.row(y - 1).transpose(), states.logF.row(y - 1).transpose(),
                      M.row(y - 1).transpose());
    nll += gaussian_nll(states.logN(y, 0), recruitment_mean(states.logN(y - 1, 0)), log_sd_R);
    for (Eigen::Index a = 1; a < A; ++a) nll += gaussian_nll(states.logN(y, a), pred(a), log_sd_N);
    const Eigen::VectorXd d = (states.logF.row(y) - states.logF.row(y - 1)).transpose();
    nll += 0.5 * d.dot(llt.solve(d)) + 0.5 * logdet + 0.5 * static_cast<double>(A) * kLog2Pi;
  }
  return nll;
}

double obs_nll(const LatentStates& states, const ObsParams& p, const StockData& data) {
  const Eigen::MatrixXd M = natural_mortality(data, static_cast<int>(states.logN.rows()));
  double nll = 0.0;
  for (const auto& r : data.obs) {
    if (r.missing) continue;
    const int y = data.year_index(r.year);
    const int a = data.ages.index(r.age);
    const double logN = states.logN(y, a);
    const double logF = states.logF(y, a);
    const double x = std::log(r.value);
    if (r.fleet == 0) {
      nll += gaussian_nll(x, baranov_log_catch(logN, logF, M(y, a)), p.log_sigma(a));
    } else {
      const int j = r.fleet - 1;
      const double mean = survey_log_mean(logN, logF, M(y, a), data.fleets[r.fleet].timing,
                                          p.log_q(j, a));
      nll += gaussian_nll(x, mean, p.log_omega(j, a));
    }
  }
  return nll;
}

Eigen::MatrixXd natural_mortality(const StockData& data, int n_years) {
  const auto& t = data.table(AuxKind::NaturalMortality);
  Eigen::MatrixXd M(n_years, data.n_ages());
  for (int y = 0; y < n_years; ++y) {
    for (int a = 0; a < data.n_ages(); ++a) M(y, a) = t.at(data.first_year() + y, a);
  }
  return M;
}

Eigen::VectorXd ssb(const LatentStates& states, const StockData& data) {
  const Eigen::Index Y = states.logN.rows();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(Y);
  for (Eigen::Index y = 0; y < Y; ++y) {
    const int year = data.first_year() + static_cast<int>(y);
    for (int a = 0; a < data.n_ages(); ++a) {
      const double F = std::exp(states.logF(y, a));
      const double M = data.table(AuxKind::NaturalMortality).at(year, a);
      const double pf = data.table(AuxKind::PropFBeforeSpawn).at(year, a);
      const double pm = data.table(AuxKind::PropMBeforeSpawn).at(year, a);
      const double mat = data.table(AuxKind::Maturity).at(year, a);
      const double sw = data.table(AuxKind::StockWeight).at(year, a);
      out(y) += std::exp(states.logN(y, a) - pf * F - pm * M) * mat * sw;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void SimulationTruth::validate() const {
  const int A = ages.count();
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, "truth: " + what); };
  if (ages.min_age < 0 || ages.max_age <= ages.min_age) fail("invalid age range");
  if (n_years < 1) fail("n_years must be >= 1");
  process.validate(A, true);
  const auto J = static_cast<Eigen::Index>(surveys.size());
  if (log_sigma.size() != A) fail("log_sigma needs one entry per age");
  if (log_omega.rows() != J || log_omega.cols() != A) fail("log_omega must be surveys x ages");
  if (log_q.rows() != J || log_q.cols() != A) fail("log_q must be surveys x ages");
  if (logN0.size() != A || logF0.size() != A) fail("logN0/logF0 need one entry per age");
  for (const auto* v : {&natural_mortality, &stock_weight, &catch_weight, &maturity, &prop_f, &prop_m}) {
    if (v->size() != A) fail("auxiliary vectors need one entry per age");
  }
  for (size_t j = 0; j < surveys.size(); ++j) {
    const auto& s = surveys[j];
    if (s.timing < 0 || s.timing >= 1) fail("survey timing outside [0,1)");
    if (s.min_age < ages.min_age || s.max_age > ages.max_age || s.min_age > s.max_age) {
      fail("survey age range outside stock ages");
    }
    if (s.first_year < first_year || s.last_year >= first_year + n_years || s.first_year > s.last_year) {
      fail("survey years outside the simulated range");
    }
    if (j > 0 && s.first_year < surveys[j - 1].first_year) fail("surveys must be ordered by first year");
  }
}

ObsParams obs_params_from_truth(const SimulationTruth& truth) {
  return {truth.log_sigma, truth.log_omega, truth.log_q};
}

Simulation simulate(const SimulationTruth& truth, std::uint64_t seed) {
  truth.validate();
  const int A = truth.ages.count();
  const int Y = truth.n_years;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Simulation sim;
  auto& st = sim.states;
  st.logN.resize(Y, A);
  st.logF.resize(Y, A);
  st.logN.row(0) = truth.logN0.transpose();
  st.logF.row(0) = truth.logF0.transpose();
  ProcessParams unit = truth.process;
  std::fill(unit.sd_logF.begin(), unit.sd_logF.end(), 1.0);
  Eigen::VectorXd fsd(A);
  for (int a = 0; a < A; ++a) fsd(a) = truth.process.sd_logF[truth.process.f_groups.empty() ? 0 : truth.process.f_groups[a]];
  const Eigen::MatrixXd chol = fsd.asDiagonal() * Eigen::MatrixXd(f_increment_covariance(unit, A).llt().matrixL());
  const Eigen::VectorXd& M = truth.natural_mortality;
  for (int y = 1; y < Y; ++y) {
    const Eigen::VectorXd pred =
        survival_step(st.logN.row(y - 1).transpose(), st.logF.row(y - 1).transpose(), M);
    st.logN(y, 0) = st.logN(y - 1, 0) + truth.process.sd_logR * normal(rng);
    for (int a = 1; a < A; ++a) st.logN(y, a) = pred(a) + truth.process.sd_logN * normal(rng);
    Eigen::VectorXd z(A);
    for (int a = 0; a < A; ++a) z(a) = normal(rng);
    st.logF.row(y) = st.logF.row(y - 1) + (chol * z).transpose();
  }

  StockData& data = sim.data;
  data.ages = truth.ages;
  for (int y = 0; y < Y; ++y) data.years.push_back(truth.first_year + y);
  FleetMeta catch_fleet;
  catch_fleet.fleet = 0;
  catch_fleet.kind = FleetKind::Catch;
  catch_fleet.first_year = truth.first_year;
  catch_fleet.last_year = truth.first_year + Y - 1;
  data.fleets.push_back(catch_fleet);
  for (size_t j = 0; j < truth.surveys.size(); ++j) {
    FleetMeta m;
    m.fleet = static_cast<int>(j) + 1;
    m.kind = FleetKind::Survey;
    m.timing = truth.surveys[j].timing;
    m.first_year = truth.surveys[j].first_year;
    m.last_year = truth.surveys[j].last_year;
    m.source_id = m.fleet;
    data.fleets.push_back(m);
  }

  for (int y = 0; y < Y; ++y) {
    for (int a = 0; a < A; ++a) {
      const double mean = baranov_log_catch(st.logN(y, a), st.logF(y, a), M(a));
      const double x = mean + std::exp(truth.log_sigma(a)) * normal(rng);
      data.obs.push_back({truth.first_year + y, 0, truth.ages.age(a), std::exp(x), false});
    }
  }
  for (size_t j = 0; j < truth.surveys.size(); ++j) {
    const auto& s = truth.surveys[j];
    for (int year = s.first_year; year <= s.last_year; ++year) {
      const int y = year - truth.first_year;
      for (int age = s.min_age; age <= s.max_age; ++age) {
        const int a = truth.ages.index(age);
        const double mean = survey_log_mean(st.logN(y, a), st.logF(y, a), M(a), s.timing,
                                            truth.log_q(static_cast<Eigen::Index>(j), a));
        const double x =
            mean + std::exp(truth.log_omega(static_cast<Eigen::Index>(j), a)) * normal(rng);
        data.obs.push_back({year, static_cast<int>(j) + 1, age, std::exp(x), false});
      }
    }
  }

  auto table = [&](AuxKind kind, const Eigen::VectorXd& v) {
    Eigen::MatrixXd values = v.transpose().replicate(Y, 1);
    return AuxTable(kind, truth.first_year, std::move(values));
  };
  data.aux[static_cast<int>(AuxKind::NaturalMortality)] = table(AuxKind::NaturalMortality, M);
  data.aux[static_cast<int>(AuxKind::StockWeight)] = table(AuxKind::StockWeight, truth.stock_weight);
  data.aux[static_cast<int>(AuxKind::CatchWeight)] = table(AuxKind::CatchWeight, truth.catch_weight);
  data.aux[static_cast<int>(AuxKind::Maturity)] = table(AuxKind::Maturity, truth.maturity);
  data.aux[static_cast<int>(AuxKind::PropFBeforeSpawn)] = table(AuxKind::PropFBeforeSpawn, truth.prop_f);
  data.aux[static_cast<int>(AuxKind::PropMBeforeSpawn)] = table(AuxKind::PropMBeforeSpawn, truth.prop_m);
  validate(data);
  return sim;
}

}  // namespace samspline
