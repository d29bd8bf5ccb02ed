#include "samspline/param_mapping.hpp"

#include <algorithm>

#include "samspline/error.hpp"

namespace samspline {

int PartitionRegime::n_groups() const {
  int m = -1;
  for (int g : groups) m = std::max(m, g);
  return m + 1;
}

std::string describe(const BlockRegime& regime) {
  if (const auto* p = std::get_if<PartitionRegime>(&regime)) {
    std::string s = "partition[";
    for (size_t i = 0; i < p->groups.size(); ++i) s += (i ? "," : "") + std::to_string(p->groups[i]);
    return s + "]";
  }
  if (std::holds_alternative<MaximalRegime>(regime)) return "maximal";
  const auto& sp = std::get<SplineRegime>(regime);
  return std::string("spline_") + to_string(sp.kind);
}

const char* to_string(BlockFamily family) {
  switch (family) {
    case BlockFamily::CatchSd: return "log_sd_catch";
    case BlockFamily::SurveySd: return "log_sd_survey";
    case BlockFamily::Catchability: return "log_q";
  }
  return "";
}

PartitionRegime parse_partition_spec(const nlohmann::json& spec, int n_ages) {
  if (!spec.is_array()) throw Error(ErrorCode::ConfigInvalid, "partition must be a JSON array");
  if (static_cast<int>(spec.size()) != n_ages) {
    throw Error(ErrorCode::LengthMismatch, "partition has " + std::to_string(spec.size()) +
                                               " entries for " + std::to_string(n_ages) + " ages");
  }
  PartitionRegime regime;
  int next = 0;  // groups are numbered 0, 1, ... in order of first appearance
  for (const auto& v : spec) {
    if (!v.is_number_integer()) throw Error(ErrorCode::ConfigInvalid, "partition entries must be integers");
    const int g = v.get<int>();
    if (g < -1) throw Error(ErrorCode::ConfigInvalid, "partition entries must be >= -1");
    if (g > next) {
      throw Error(ErrorCode::NonContiguousGroups,
                  "partition group " + std::to_string(g) + " appears before group " + std::to_string(next));
    }
    if (g == next) ++next;
    regime.groups.push_back(g);
  }
  if (next == 0) throw Error(ErrorCode::ConfigInvalid, "partition has no groups");
  return regime;
}

namespace {

ParamBlock make_block(BlockFamily family, int fleet, const BlockRegime& regime,
                      const std::vector<int>& ages, int n_ages, const SplineOptions& options) {
  ParamBlock b;
  b.family = family;
  b.fleet = fleet;
  b.regime = regime;
  b.ages = ages;
  const auto n = static_cast<Eigen::Index>(ages.size());
  const std::string where = std::string(to_string(family)) + " fleet " + std::to_string(fleet);
  if (const auto* p = std::get_if<PartitionRegime>(&regime)) {
    if (static_cast<int>(p->groups.size()) != n_ages) {
      throw Error(ErrorCode::LengthMismatch, where + ": partition length differs from age count");
    }
    const int G = p->n_groups();
    b.design = Eigen::MatrixXd::Zero(n, G);
    std::vector<bool> covered(static_cast<size_t>(G), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int g = p->groups[static_cast<size_t>(ages[static_cast<size_t>(i)])];
      if (g < 0) {
        throw Error(ErrorCode::ConfigInvalid,
                    where + ": observed age index " + std::to_string(ages[static_cast<size_t>(i)]) +
                        " has no partition group");
      }
      b.design(i, g) = 1.0;
      covered[static_cast<size_t>(g)] = true;
    }
    for (int g = 0; g < G; ++g) {
      if (!covered[static_cast<size_t>(g)]) {
        throw Error(ErrorCode::ConfigInvalid,
                    where + ": partition group " + std::to_string(g) + " covers no observed age");
      }
    }
  } else if (std::holds_alternative<MaximalRegime>(regime)) {
    b.design = Eigen::MatrixXd::Identity(n, n);
  } else {
    const auto& sp = std::get<SplineRegime>(regime);
    b.spline = make_spline_block(sp.kind, ages, options);
    b.design = b.spline->X;
    if (!b.spline->penalized()) b.spline.reset();
  }
  b.n_coef = static_cast<int>(b.design.cols());
  return b;
}

}  // namespace

ParamMap::ParamMap(const StockData& data, const RegimeConfig& config, const SplineOptions& options)
    : n_ages_(data.n_ages()), n_surveys_(data.n_surveys()) {
  auto check_fleet = [&](int fleet, const char* what) {
    if (fleet < 1 || fleet > n_surveys_) {
      throw Error(ErrorCode::ConfigInvalid, std::string(what) + " refers to fleet " +
                                                std::to_string(fleet) + " but the stock has " +
                                                std::to_string(n_surveys_) + " surveys");
    }
  };
  for (const auto& [f, r] : config.survey_sd) check_fleet(f, "survey_sd");
  for (const auto& [f, r] : config.catchability) check_fleet(f, "catchability");
  for (const auto& [f, t] : config.survey_sd_alias) {
    check_fleet(f, "survey_sd alias");
    check_fleet(t, "survey_sd alias");
  }
  for (const auto& [f, t] : config.catchability_alias) {
    check_fleet(f, "catchability alias");
    check_fleet(t, "catchability alias");
  }

  auto add = [&](BlockFamily family, int fleet, const BlockRegime& regime, int& counter) {
    const auto ages = data.observed_age_indices(fleet);
    if (ages.empty()) {
      throw Error(ErrorCode::ConfigInvalid, "fleet " + std::to_string(fleet) + " has no records");
    }
    ParamBlock b = make_block(family, fleet, regime, ages, n_ages_, options);
    b.offset = counter;
    counter += b.n_coef;
    blocks_.push_back(std::move(b));
  };
  add(BlockFamily::CatchSd, 0, config.catch_sd, n_variance_);

  auto add_family = [&](BlockFamily family, const std::map<int, BlockRegime>& regimes,
                        const BlockRegime& fallback, const std::map<int, int>& alias, int& counter) {
    for (int j = 1; j <= n_surveys_; ++j) {
      if (alias.count(j)) continue;
      auto it = regimes.find(j);
      add(family, j, it == regimes.end() ? fallback : it->second, counter);
    }
    for (const auto& [j, target] : alias) {
      if (alias.count(target)) {
        throw Error(ErrorCode::ConfigInvalid, "alias target " + std::to_string(target) + " is itself aliased");
      }
      const ParamBlock& src = blocks_[static_cast<size_t>(block_id(family, target))];
      if (data.observed_age_indices(j) != src.ages) {
        throw Error(ErrorCode::ConfigInvalid, "aliased fleets " + std::to_string(j) + " and " +
                                                  std::to_string(target) + " observe different ages");
      }
      ParamBlock b = src;
      b.fleet = j;
      b.owns_coefficients = false;
      blocks_.push_back(std::move(b));
    }
  };
  add_family(BlockFamily::SurveySd, config.survey_sd, config.survey_sd_default,
             config.survey_sd_alias, n_variance_);
  add_family(BlockFamily::Catchability, config.catchability, config.catchability_default,
             config.catchability_alias, n_catchability_);
}

int ParamMap::block_id(BlockFamily family, int fleet) const {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].family == family && blocks_[i].fleet == fleet) return static_cast<int>(i);
  }
  throw Error(ErrorCode::InvalidArgument, std::string("no ") + to_string(family) + " block for fleet " +
                                              std::to_string(fleet));
}

bool ParamMap::has_penalty(PenaltyGroup group) const {
  for (const auto& b : blocks_) {
    if (b.owns_coefficients && b.spline && penalty_group(b.family) == group) return true;
  }
  return false;
}

Eigen::VectorXd ParamMap::evaluate_block(int id, const Eigen::VectorXd& coeffs) const {
  const ParamBlock& b = block(id);
  const int expected = penalty_group(b.family) == PenaltyGroup::Variance ? n_variance_ : n_catchability_;
  if (coeffs.size() != expected) {
    throw Error(ErrorCode::LayoutMismatch, "expected " + std::to_string(expected) +
                                               " coefficients, got " + std::to_string(coeffs.size()));
  }
  return b.design * coeffs.segment(b.offset, b.n_coef);
}

Eigen::VectorXd ParamMap::constant_coefficients(PenaltyGroup group, double level) const {
  // Every design here has unit row sums (indicators, identity, cardinal
  // splines, B-spline partition of unity), so a constant vector is constant.
  const int n = group == PenaltyGroup::Variance ? n_variance_ : n_catchability_;
  return Eigen::VectorXd::Constant(n, level);
}

ParameterCounts ParamMap::count_parameters() const {
  ParameterCounts c;
  for (const auto& b : blocks_) {
    c.per_block.push_back(b.owns_coefficients ? b.n_coef : 0);
  }
  c.variance_coefficients = n_variance_;
  c.catchability_coefficients = n_catchability_;
  c.penalty_parameters = (has_penalty(PenaltyGroup::Variance) ? 1 : 0) +
                         (has_penalty(PenaltyGroup::Catchability) ? 1 : 0);
  return c;
}

}  // namespace samspline
