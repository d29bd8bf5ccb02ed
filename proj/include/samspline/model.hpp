#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "samspline/config.hpp"
#include "samspline/laplace.hpp"
#include "samspline/model_terms.hpp"
#include "samspline/param_mapping.hpp"
#include "samspline/population_model.hpp"
#include "samspline/stock_data.hpp"

namespace samspline {

// The state-space stock model as a Laplace problem.
//
// Inner variables: logN (year-major), logF, catchability coefficients.
// Outer variables: log_sd_R, log_sd_N, log_sd_F[g], rho_F_logit, variance
// coefficients, then log_lambda_variance and log_lambda_catchability when
// the corresponding group has a penalized spline block.
class StockModel {
 public:
  StockModel(const StockData& data, const ModelConfig& config);
  StockModel(const StockModel&) = delete;
  StockModel& operator=(const StockModel&) = delete;

  const StockData& data() const { return data_; }
  const ModelConfig& config() const { return config_; }
  const ParamMap& param_map() const { return map_; }
  const LaplaceProblem& problem() const { return problem_; }

  int n_years() const { return Y_; }
  int n_ages() const { return A_; }
  int n_inner() const { return problem_.n_inner(); }
  int n_outer() const { return problem_.n_outer(); }
  int n_f_groups() const { return G_; }
  const std::vector<int>& f_groups() const { return f_groups_; }

  int logN_index(int y, int a) const { return y * A_ + a; }
  int logF_index(int y, int a) const { return Y_ * A_ + y * A_ + a; }
  int q_coef_index(int k) const { return 2 * Y_ * A_ + k; }

  // Outer positions (local to theta).
  int idx_log_sd_R() const { return 0; }
  int idx_log_sd_N() const { return 1; }
  int idx_log_sd_F(int g) const { return 2 + g; }
  int idx_rho_F() const { return 2 + G_; }
  int idx_var_coef(int k) const { return 3 + G_ + k; }
  std::optional<int> idx_log_lambda_variance() const { return lambda_var_; }
  std::optional<int> idx_log_lambda_catchability() const { return lambda_q_; }

  const std::vector<std::string>& outer_names() const { return outer_names_; }
  int outer_index(const std::string& name) const;  // throws ConfigInvalid

  Eigen::VectorXd initial_outer() const;          // config init, fixed values applied
  Eigen::VectorXd initial_inner() const;          // naive cohort start
  const std::vector<bool>& fixed_mask() const { return fixed_; }

  // Outer-only part of the objective: variance spline priors minus the
  // log-penalty prior. Gradient is with respect to the full theta.
  double outer_penalty(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const;
  // Variance-group log prior of the coefficients (positive log density).
  double log_prior_variance(const Eigen::VectorXd& theta) const;
  // Sum of log_prior_rho over the active log-penalties.
  double log_prior_penalties(const Eigen::VectorXd& theta) const;

  LatentStates states(const Eigen::VectorXd& u) const;
  ProcessParams process_params(const Eigen::VectorXd& theta) const;
  ObsParams obs_params(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;
  Eigen::VectorXd variance_coefs(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd catchability_coefs(const Eigen::VectorXd& u) const;

  // Global references (inner first, then outer) giving the log-scale value
  // of a block at one of its ages.
  LocalVar block_value_refs(int block_id, int age_index) const;

  // -log likelihood of states and data (no spline priors).
  double joint_nll(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;

  const Eigen::MatrixXd& natural_mortality() const { return M_; }

 private:
  void build_layout();
  void build_terms();

  StockData data_;
  ModelConfig config_;
  ParamMap map_;
  int Y_ = 0;
  int A_ = 0;
  int G_ = 1;
  std::vector<int> f_groups_;
  Eigen::MatrixXd M_;
  std::optional<int> lambda_var_;
  std::optional<int> lambda_q_;
  std::vector<std::string> outer_names_;
  std::vector<bool> fixed_;
  Eigen::VectorXd fixed_values_;
  LaplaceProblem problem_{0, 0};
  // variance-group priors evaluated outside the integral
  struct VariancePrior {
    int offset;
    PenaltyPriorTerm term;
  };
  std::vector<VariancePrior> variance_priors_;
};

}  // namespace samspline
