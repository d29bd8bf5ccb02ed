#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "samspline/autodiff.hpp"
#include "samspline/stock_data.hpp"

namespace samspline {

inline constexpr double kLog2Pi = 1.8378770664093454836;
// Standard deviation of the wide Gaussian priors on first-year states.
inline constexpr double kDiffuseSd = 10.0;

// Latent log abundance and log fishing mortality, rows = years, cols = ages.
struct LatentStates {
  Eigen::MatrixXd logN;
  Eigen::MatrixXd logF;
};

struct ProcessParams {
  double sd_logR = 0.5;
  double sd_logN = 0.2;
  std::vector<double> sd_logF{0.2};  // one per F group
  double rho_F = 0.0;                // exchangeable correlation of F increments
  std::vector<int> f_groups;         // age index -> F group

  void validate(int n_ages, bool allow_zero = false) const;
};

// Evaluated observation parameters. Rows of the survey matrices are surveys
// (internal fleet id - 1); ages a survey does not observe hold NaN.
struct ObsParams {
  Eigen::VectorXd log_sigma;
  Eigen::MatrixXd log_omega;
  Eigen::MatrixXd log_q;
};

// ---------------------------------------------------------------------------
// Scalar building blocks, templated so the estimation code can evaluate them
// on dual numbers.

template <class T>
T gaussian_nll(const T& x, const T& mean, const T& log_sd) {
  using ad::exp;
  const T z = (x - mean) * exp(-log_sd);
  return 0.5 * z * z + log_sd + 0.5 * kLog2Pi;
}

// Mean log abundance one year later at an interior age: cohort survival.
template <class T>
T survival_mean(const T& logN, const T& logF, double M) {
  using ad::exp;
  return logN - exp(logF) - M;
}

// Mean log abundance of the plus group next year.
template <class T>
T plus_group_mean(const T& logN_prev_age, const T& logF_prev_age, double M_prev_age,
                  const T& logN_plus, const T& logF_plus, double M_plus) {
  return ad::logspace_add(survival_mean(logN_prev_age, logF_prev_age, M_prev_age),
                          survival_mean(logN_plus, logF_plus, M_plus));
}

// Baranov catch equation on the log scale; requires F > 0.
template <class T>
T baranov_log_catch(const T& logN, const T& logF, double M) {
  using ad::exp;
  using ad::log;
  const T F = exp(logF);
  const T Z = F + M;
  return logN + logF - log(Z) + ad::log1mexp(Z);
}

template <class T>
T survey_log_mean(const T& logN, const T& logF, double M, double timing, const T& logQ) {
  using ad::exp;
  return logQ + logN - timing * (exp(logF) + M);
}

// ---------------------------------------------------------------------------

// Predicted next-year log abundance for ages 2..A. Entry 0 (recruitment) is
// NaN; recruitment_mean supplies it.
Eigen::VectorXd survival_step(const Eigen::VectorXd& logN_row, const Eigen::VectorXd& logF_row,
                              const Eigen::VectorXd& M_row);

// Random-walk recruitment: next year's mean log recruitment.
inline double recruitment_mean(double logR_prev) { return logR_prev; }

// Mean log catch; nullopt when F = 0 (no catch expected).
std::optional<double> catch_mean_log(double logN, double logF, double M);

double survey_mean_log(double logN, double logF, double M, double timing, double logQ);

// Exchangeable correlation matrix scaled by per-age sds.
Eigen::MatrixXd f_increment_covariance(const ProcessParams& params, int n_ages);

// Negative log density of the latent states (first-year priors, N and F
// transitions). M has one row per model year.
double process_nll(const LatentStates& states, const ProcessParams& params,
                   const Eigen::MatrixXd& M);

// Negative log likelihood of the non-missing records.
double obs_nll(const LatentStates& states, const ObsParams& obs_params, const StockData& data);

// Natural mortality for the model years as a (year x age) matrix.
Eigen::MatrixXd natural_mortality(const StockData& data, int n_years);

// Spawning stock biomass per model year.
Eigen::VectorXd ssb(const LatentStates& states, const StockData& data);

// ---------------------------------------------------------------------------
// Simulation

struct SurveyDesign {
  double timing = 0.5;
  int min_age = 1;
  int max_age = 1;
  int first_year = 0;
  int last_year = 0;
};

struct SimulationTruth {
  AgeRange ages;
  int first_year = 2000;
  int n_years = 20;
  std::vector<SurveyDesign> surveys;
  ProcessParams process;
  Eigen::VectorXd log_sigma;    // per age
  Eigen::MatrixXd log_omega;    // surveys x ages
  Eigen::MatrixXd log_q;        // surveys x ages
  Eigen::VectorXd logN0;        // first-year log abundance
  Eigen::VectorXd logF0;        // first-year log F
  // Auxiliary inputs, constant over years (one entry per age).
  Eigen::VectorXd natural_mortality;
  Eigen::VectorXd stock_weight;
  Eigen::VectorXd catch_weight;
  Eigen::VectorXd maturity;
  Eigen::VectorXd prop_f;
  Eigen::VectorXd prop_m;

  void validate() const;
};

struct Simulation {
  StockData data;
  LatentStates states;
};

// Draws states from the process model and observations from the observation
// model. The same truth and seed always give the same result.
Simulation simulate(const SimulationTruth& truth, std::uint64_t seed);

// Noise-free observation means of a trajectory, as ObsParams would predict.
ObsParams obs_params_from_truth(const SimulationTruth& truth);

}  // namespace samspline
