#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "samspline/spline_basis.hpp"
#include "samspline/stock_data.hpp"

namespace samspline {

// Group index per age; -1 marks ages the fleet does not observe.
struct PartitionRegime {
  std::vector<int> groups;
  int n_groups() const;
  bool operator==(const PartitionRegime&) const = default;
};

struct MaximalRegime {
  bool operator==(const MaximalRegime&) const = default;
};

struct SplineRegime {
  BasisKind kind = BasisKind::CubicRegressionShrinkage;
  bool operator==(const SplineRegime&) const = default;
};

using BlockRegime = std::variant<PartitionRegime, MaximalRegime, SplineRegime>;

std::string describe(const BlockRegime& regime);

enum class BlockFamily { CatchSd, SurveySd, Catchability };
enum class PenaltyGroup { Variance, Catchability };

const char* to_string(BlockFamily family);
inline PenaltyGroup penalty_group(BlockFamily f) {
  return f == BlockFamily::Catchability ? PenaltyGroup::Catchability : PenaltyGroup::Variance;
}

// Parses a JSON array of group indices for a fleet covering n_ages ages.
PartitionRegime parse_partition_spec(const nlohmann::json& spec, int n_ages);

// Regime choices for every block of a stock. Survey maps are keyed by
// internal fleet id; surveys without an entry use the default.
struct RegimeConfig {
  BlockRegime catch_sd = SplineRegime{};
  BlockRegime survey_sd_default = SplineRegime{};
  BlockRegime catchability_default = SplineRegime{};
  std::map<int, BlockRegime> survey_sd;
  std::map<int, BlockRegime> catchability;
  // Optional cross-fleet sharing: fleet -> fleet whose coefficients it reuses.
  std::map<int, int> survey_sd_alias;
  std::map<int, int> catchability_alias;
};

struct ParamBlock {
  BlockFamily family = BlockFamily::CatchSd;
  int fleet = 0;
  BlockRegime regime;
  std::vector<int> ages;   // age indices the block covers
  Eigen::MatrixXd design;  // ages.size() x n_coef: per-age values = design * coefficients
  int offset = 0;          // start of the coefficients in the family's vector
  int n_coef = 0;
  bool owns_coefficients = true;  // false for aliased blocks
  std::optional<SplineBlock> spline;
};

struct ParameterCounts {
  std::vector<int> per_block;
  int variance_coefficients = 0;
  int catchability_coefficients = 0;
  int penalty_parameters = 0;
  int total() const { return variance_coefficients + catchability_coefficients + penalty_parameters; }
};

// Maps coefficient vectors to per-(fleet, age) parameter values. Variance
// blocks (catch sd, survey sd) index one coefficient vector, catchability
// blocks another.
class ParamMap {
 public:
  ParamMap() = default;
  ParamMap(const StockData& data, const RegimeConfig& config, const SplineOptions& options = {});

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(int id) const { return blocks_.at(static_cast<size_t>(id)); }
  int block_id(BlockFamily family, int fleet) const;
  int n_variance_coefs() const { return n_variance_; }
  int n_catchability_coefs() const { return n_catchability_; }
  int n_ages() const { return n_ages_; }
  int n_surveys() const { return n_surveys_; }
  // True when some block of the group carries a penalty, so its log-lambda is a parameter.
  bool has_penalty(PenaltyGroup group) const;

  // Per-age values (log scale) of a block, aligned with block(id).ages.
  // coeffs is the whole coefficient vector of the block's family.
  Eigen::VectorXd evaluate_block(int id, const Eigen::VectorXd& coeffs) const;

  // Initial coefficients giving the constant value `level` at every age.
  Eigen::VectorXd constant_coefficients(PenaltyGroup group, double level) const;

  ParameterCounts count_parameters() const;

 private:
  std::vector<ParamBlock> blocks_;
  int n_variance_ = 0;
  int n_catchability_ = 0;
  int n_ages_ = 0;
  int n_surveys_ = 0;
};

}  // namespace samspline
