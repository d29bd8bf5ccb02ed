#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "samspline/param_mapping.hpp"
#include "samspline/spline_basis.hpp"

namespace samspline {

enum class RmseScale { Raw, Log };

struct PriorOptions {
  double K = 7.0;
  double delta = 100.0;
};

struct InitialValues {
  double log_q = -5.0;
  double log_sd = -0.35;       // catch and survey log-sds
  double log_lambda = 0.0;
  double log_sd_R = -0.35;
  double log_sd_N = -0.35;
  double log_sd_F = -0.7;
  double rho_F = 0.5;          // correlation scale
  double F = 0.2;              // inner start for fishing mortality
};

struct OptimizerOptions {
  int max_iter = 500;
  double grad_tol = 1e-5;      // relative to max(1, |objective|)
  double inner_tol = 1e-8;
  int inner_max_iter = 100;
  int restarts = 0;
};

struct ModelConfig {
  std::string name = "spline1";
  RegimeConfig regimes;
  SplineOptions spline;
  PriorOptions priors;
  InitialValues init;
  OptimizerOptions optimizer;
  std::vector<int> f_groups;             // empty: one group for all ages
  std::optional<double> fixed_rho_F;     // unset: estimated
  std::map<std::string, double> fixed;   // outer parameters pinned by name
  RmseScale rmse_scale = RmseScale::Raw;
  bool lognormal_mean = false;
  std::uint64_t seed = 1;
};

// Missing keys take the defaults above, so {} is the cs-spline model.
ModelConfig parse_config(const nlohmann::json& j);
ModelConfig load_config(const std::string& path);
nlohmann::json to_json(const ModelConfig& config);

BlockRegime parse_regime(const nlohmann::json& j);
nlohmann::json regime_to_json(const BlockRegime& regime);

}  // namespace samspline
