#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "samspline/config.hpp"
#include "samspline/fit.hpp"
#include "samspline/stock_data.hpp"

namespace samspline {

enum class FoldKind { CV, Forward };

const char* to_string(FoldKind kind);

struct FoldSpec {
  FoldKind kind = FoldKind::CV;
  int target_year = 0;
  int last_year = 0;                 // final year kept for training
  std::vector<int> masked_fleets;    // fleets whose target-year records are hidden
  std::vector<int> dropped_fleets;   // surveys removed from the training data

  std::string key() const;  // e.g. "cv-2005"
  bool operator==(const FoldSpec&) const = default;
};

// cv: every year but the first; a fleet is left unmasked when the target year
// holds all of its data. forward: the last ceil(Y/3) years, trained on years
// up to the target with the target masked, dropping surveys with fewer than
// five observed years before it. Forward needs six years (TooFewYears).
std::vector<FoldSpec> make_folds(const StockData& data, FoldKind kind);

struct FoldData {
  StockData train;
  std::vector<int> fleet_map;  // original fleet id -> training id, -1 if dropped
};

FoldData fold_training_data(const StockData& data, const FoldSpec& fold);

// Config with per-fleet settings renumbered to the training fleets.
ModelConfig fold_config(const ModelConfig& config, const std::vector<int>& fleet_map);

struct CellPrediction {
  int year = 0;
  int fleet = 0;  // original id
  int age = 0;
  double observed = 0.0;
  double predicted = 0.0;
};

// Predictions for the hidden cells of a fold from a fit on its training data.
// Throws NotConverged for a failed fit.
std::vector<CellPrediction> predict_fold(const FitResult& fit, const FoldSpec& fold, const StockData& data,
                                         bool lognormal_mean = false);

struct ConditionalForecast {
  double scale = 1.0;
  Eigen::VectorXd catch_at_age;  // numbers, all model ages
  double biomass = 0.0;          // achieved total catch biomass
};

// Scales F so that sum(weight * Baranov catch) equals biomass. Throws NoRoot
// when biomass is at or above the catchable maximum sum(weight * N).
ConditionalForecast conditional_catch_forecast(const Eigen::VectorXd& N, const Eigen::VectorXd& F,
                                               const Eigen::VectorXd& M, const Eigen::VectorXd& weight,
                                               double biomass);

// Uses N of the target year and the F row of the year before it.
ConditionalForecast conditional_catch_forecast(const FitResult& fit, const StockData& data, int target_year,
                                               double biomass);

// Total catch biomass observed in a year.
double observed_catch_biomass(const StockData& data, int year);

double rmse(const std::vector<double>& predicted, const std::vector<double>& observed, RmseScale scale);

enum class Criterion { CvCatch, CvSurvey, FwdCatch, FwdSurvey, FwdConditionalCatch };
inline constexpr int kCriterionCount = 5;

const char* to_string(Criterion c);
const char* to_string(RmseScale scale);

struct FoldRun {
  std::string model;
  FoldSpec fold;
  bool converged = false;
  std::string message;
  std::vector<CellPrediction> predictions;
  std::vector<CellPrediction> conditional;  // forward folds only
};

struct RmseEntry {
  std::string model;
  Criterion criterion = Criterion::CvCatch;
  RmseScale scale = RmseScale::Raw;
  std::string fold;  // fold key, or "pooled" over the folds all models converged on
  bool converged = false;
  double value = 0.0;
};

struct EvalReport {
  std::string stock;
  std::vector<std::string> models;
  std::vector<RmseEntry> entries;
  std::optional<std::string> baseline;  // set when values are ratios
};

// Fold-level RMSE for every run and pooled RMSE over the shared converged folds.
EvalReport summarize(const std::vector<FoldRun>& runs, const std::vector<std::string>& models,
                     const std::string& stock);

// Ratios to the baseline model over folds every model converged on.
// Throws BaselineMissing.
EvalReport standardize(const EvalReport& report, const std::string& baseline);

struct TallyRow {
  std::string model;  // "All" for the intersection row
  int converged = 0;
  int total = 0;
};

std::vector<TallyRow> tally_convergence(const std::vector<FoldRun>& runs);

enum class ValidationMode { CV, Forward, Both };

struct ValidationOptions {
  ValidationMode mode = ValidationMode::Both;
  int jobs = 1;
  RmseScale scale = RmseScale::Raw;
  bool lognormal_mean = false;
  std::string stock = "stock";
};

struct ValidationResult {
  std::string version;
  ValidationOptions options;
  std::vector<FoldSpec> folds;
  std::vector<FoldRun> runs;  // fold-major, then config order
  EvalReport report;
  EvalReport standardized;    // against the first config
  std::vector<TallyRow> tally_cv;
  std::vector<TallyRow> tally_forward;
};

// Fits every config on every fold. Fit errors are recorded per run.
ValidationResult run_validation(const StockData& data, const std::vector<ModelConfig>& configs,
                                const ValidationOptions& options);

nlohmann::json to_json(const ValidationResult& result);

// Writes report.json, report.csv and boxplot_data.csv.
void write_validation_outputs(const ValidationResult& result, const std::filesystem::path& dir);

}  // namespace samspline
