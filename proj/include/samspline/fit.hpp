#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "samspline/config.hpp"
#include "samspline/laplace.hpp"
#include "samspline/model.hpp"
#include "samspline/stock_data.hpp"

namespace samspline {

// total_objective and its gradient for one model, with warm-started inner
// modes. Not thread safe.
class OuterObjective {
 public:
  explicit OuterObjective(const StockModel& model);

  const StockModel& model() const { return *model_; }
  LaplaceSolver& solver() { return solver_; }

  // Negative log marginal likelihood (catchability prior integrated) plus
  // variance priors and log-penalty prior. grad may be null.
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, InnerResult* inner = nullptr);
  // Laplace part only.
  double laplace_marginal(const Eigen::VectorXd& theta, InnerResult* inner = nullptr);

  void reset_warm_start();
  const Eigen::VectorXd& warm_start() const { return warm_; }

 private:
  template <class Fn>
  auto with_restart(Fn&& fn) -> decltype(fn(Eigen::VectorXd()));

  const StockModel* model_;
  LaplaceSolver solver_;
  Eigen::VectorXd start_;
  Eigen::VectorXd warm_;
};

struct CurveEstimate {
  BlockFamily family = BlockFamily::CatchSd;
  int fleet = 0;
  std::vector<int> ages;  // data ages
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
};

struct FitResult {
  std::string model;
  std::string version;
  bool converged = false;
  std::string reason;
  double objective = 0.0;
  double objective_initial = 0.0;
  double nll_marginal = 0.0;  // Laplace part of the objective
  double gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double runtime_seconds = 0.0;

  std::vector<std::string> outer_names;
  Eigen::VectorXd outer_estimates;
  Eigen::VectorXd outer_se;  // NaN for fixed parameters or without a PD Hessian
  std::vector<bool> outer_fixed;
  bool hessian_pd = false;
  std::optional<double> lambda_variance;
  std::optional<double> lambda_catchability;

  Eigen::VectorXd inner_mode;
  int inner_n = 0;
  int inner_factor_nnz = 0;
  double inner_logdet = 0.0;

  AgeRange ages;
  std::vector<int> years;
  std::vector<FleetMeta> fleets;
  LatentStates states;
  ProcessParams process;
  ObsParams obs_params;
  std::vector<CurveEstimate> curves;
  Eigen::VectorXd ssb;
  Eigen::VectorXd ssb_se;
};

// Fits a model. Throws DataTooSmall or ConfigInvalid for unusable input;
// optimization failures give converged = false.
FitResult fit(const StockData& data, const ModelConfig& config);

// Fit from explicit starting outer values, used for pinned-parameter studies.
FitResult fit(const StockModel& model, const Eigen::VectorXd& theta0);

nlohmann::json to_json(const FitResult& result);
FitResult fit_result_from_json(const nlohmann::json& j);

// Per-age curve table: block, fleet, age, estimate, se.
std::string curves_csv(const FitResult& result);

std::string build_version();

}  // namespace samspline
