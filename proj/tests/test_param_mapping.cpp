#include <doctest.h>

#include <random>

#include "samspline/error.hpp"
#include "samspline/param_mapping.hpp"
#include "sim_support.hpp"

using namespace samspline;
using nlohmann::json;

namespace {

StockData stock(int n_ages, int n_years = 6, int first_survey_age = 1) {
  SimulationTruth t = testsupport::make_truth(n_ages, n_years);
  t.surveys[1].min_age = first_survey_age;
  return simulate(t, 1).data;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
  return v;
}

}  // namespace

TEST_CASE("partition specs") {
  const PartitionRegime p = parse_partition_spec(json::parse("[0,1,2,2,2,2,2,2,2,3,4,4,4]"), 13);
  CHECK(p.n_groups() == 5);
  CHECK(parse_partition_spec(json::parse("[0,0,0,0,0,0,0,0,0,0]"), 10).n_groups() == 1);
  CHECK(parse_partition_spec(json::parse("[-1,0,0,1]"), 4).n_groups() == 2);
  CHECK(code_of([] { parse_partition_spec(json::parse("[0,2,1]"), 3); }) == ErrorCode::NonContiguousGroups);
  CHECK(code_of([] { parse_partition_spec(json::parse("[0,0]"), 3); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { parse_partition_spec(json::parse("[0,-2,1]"), 3); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { parse_partition_spec(json::parse("{}"), 3); }) == ErrorCode::ConfigInvalid);
  CHECK(describe(p) == "partition[0,1,2,2,2,2,2,2,2,3,4,4,4]");
}

TEST_CASE("evaluate_block per regime") {
  const StockData data = stock(5);
  SUBCASE("partition copies by group") {
    RegimeConfig c;
    c.catch_sd = parse_partition_spec(json::parse("[0,0,1,1,1]"), 5);
    c.survey_sd_default = MaximalRegime{};
    const ParamMap m(data, c);
    const int id = m.block_id(BlockFamily::CatchSd, 0);
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(m.n_variance_coefs());
    coeffs.segment(m.block(id).offset, 2) << -0.5, -1.2;
    const Eigen::VectorXd v = m.evaluate_block(id, coeffs);
    Eigen::VectorXd want(5);
    want << -0.5, -0.5, -1.2, -1.2, -1.2;
    CHECK(v == want);
  }
  SUBCASE("maximal is the identity") {
    RegimeConfig c;
    c.catch_sd = MaximalRegime{};
    const ParamMap m(data, c);
    const int id = m.block_id(BlockFamily::CatchSd, 0);
    std::mt19937_64 rng(1);
    const Eigen::VectorXd coeffs = random_vector(m.n_variance_coefs(), rng);
    CHECK(m.evaluate_block(id, coeffs) == coeffs.segment(m.block(id).offset, 5));
  }
  SUBCASE("cardinal spline reproduces its coefficients at the ages") {
    RegimeConfig c;
    const ParamMap m(data, c);
    const int id = m.block_id(BlockFamily::Catchability, 2);
    std::mt19937_64 rng(2);
    const Eigen::VectorXd coeffs = random_vector(m.n_catchability_coefs(), rng);
    const Eigen::VectorXd v = m.evaluate_block(id, coeffs);
    CHECK((v - coeffs.segment(m.block(id).offset, 5)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("wrong coefficient length") {
    const ParamMap m(data, RegimeConfig{});
    CHECK(code_of([&] { m.evaluate_block(0, Eigen::VectorXd::Zero(3)); }) == ErrorCode::LayoutMismatch);
  }
}

TEST_CASE("evaluation is linear for every regime") {
  const StockData data = stock(6);
  std::vector<RegimeConfig> configs(4);
  configs[0].catch_sd = configs[0].survey_sd_default = configs[0].catchability_default = MaximalRegime{};
  configs[1].catch_sd = configs[1].survey_sd_default = configs[1].catchability_default =
      parse_partition_spec(json::parse("[0,1,1,2,2,2]"), 6);
  configs[2].catch_sd = configs[2].survey_sd_default = configs[2].catchability_default =
      SplineRegime{BasisKind::BSpline};
  std::mt19937_64 rng(3);
  for (const auto& c : configs) {
    const ParamMap m(data, c);
    for (int id = 0; id < static_cast<int>(m.blocks().size()); ++id) {
      const auto n = penalty_group(m.block(id).family) == PenaltyGroup::Variance ? m.n_variance_coefs()
                                                                                   : m.n_catchability_coefs();
      const Eigen::VectorXd x = random_vector(n, rng), y = random_vector(n, rng);
      const Eigen::VectorXd lhs = m.evaluate_block(id, 2.0 * x - 0.5 * y);
      const Eigen::VectorXd rhs = 2.0 * m.evaluate_block(id, x) - 0.5 * m.evaluate_block(id, y);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
      // constant coefficients give a constant curve
      const Eigen::VectorXd flat = m.evaluate_block(id, Eigen::VectorXd::Constant(n, -1.3));
      CHECK((flat.array() + 1.3).abs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("parameter counts") {
  SUBCASE("maximal, 8 ages, catch and two surveys") {
    const StockData data = stock(8);
    RegimeConfig c;
    c.catch_sd = c.survey_sd_default = c.catchability_default = MaximalRegime{};
    const ParameterCounts n = ParamMap(data, c).count_parameters();
    CHECK(n.per_block == std::vector<int>{8, 8, 8, 8, 8});
    CHECK(n.total() == 40);
    CHECK(n.penalty_parameters == 0);
  }
  SUBCASE("splines always add exactly two penalties") {
    for (int A : {4, 8, 11}) {
      const ParameterCounts n = ParamMap(stock(A), RegimeConfig{}).count_parameters();
      CHECK(n.penalty_parameters == 2);
      CHECK(n.variance_coefficients == 3 * A);
      CHECK(n.catchability_coefficients == 2 * A);
    }
  }
  SUBCASE("13-age partition with five groups") {
    const StockData data = stock(13);
    RegimeConfig c;
    c.catch_sd = parse_partition_spec(json::parse("[0,1,2,2,2,2,2,2,2,3,4,4,4]"), 13);
    const ParameterCounts n = ParamMap(data, c).count_parameters();
    CHECK(n.per_block[0] == 5);
  }
  SUBCASE("maximal counts the observed ages of a survey sub-range") {
    const StockData data = stock(7, 6, 3);
    RegimeConfig c;
    c.catch_sd = c.survey_sd_default = c.catchability_default = MaximalRegime{};
    const ParamMap m(data, c);
    CHECK(m.block(m.block_id(BlockFamily::SurveySd, 2)).n_coef == 5);
    CHECK(m.block(m.block_id(BlockFamily::SurveySd, 2)).ages == std::vector<int>{2, 3, 4, 5, 6});
  }
}

TEST_CASE("survey sub-ranges with partitions") {
  const StockData data = stock(6, 6, 3);
  RegimeConfig c;
  c.survey_sd[2] = parse_partition_spec(json::parse("[-1,-1,0,0,1,1]"), 6);
  const ParamMap m(data, c);
  CHECK(m.block(m.block_id(BlockFamily::SurveySd, 2)).n_coef == 2);
  // an observed age without a group, or a group without an observed age
  RegimeConfig bad = c;
  bad.survey_sd[2] = parse_partition_spec(json::parse("[-1,-1,-1,0,0,0]"), 6);
  CHECK(code_of([&] { ParamMap(data, bad); }) == ErrorCode::ConfigInvalid);
  bad.survey_sd[2] = parse_partition_spec(json::parse("[0,0,1,1,2,2]"), 6);
  CHECK(code_of([&] { ParamMap(data, bad); }) == ErrorCode::ConfigInvalid);
  bad.survey_sd[2] = parse_partition_spec(json::parse("[0,0,0]"), 3);
  CHECK(code_of([&] { ParamMap(data, bad); }) == ErrorCode::LengthMismatch);
  bad = c;
  bad.catchability[3] = MaximalRegime{};
  CHECK(code_of([&] { ParamMap(data, bad); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("aliased surveys share coefficients") {
  const StockData data = stock(5);
  RegimeConfig c;
  c.survey_sd_default = MaximalRegime{};
  c.survey_sd_alias[2] = 1;
  const ParamMap m(data, c);
  CHECK(m.n_variance_coefs() == 5 * 2);
  const int a = m.block_id(BlockFamily::SurveySd, 1), b = m.block_id(BlockFamily::SurveySd, 2);
  CHECK(!m.block(b).owns_coefficients);
  std::mt19937_64 rng(4);
  const Eigen::VectorXd coeffs = random_vector(m.n_variance_coefs(), rng);
  CHECK(m.evaluate_block(a, coeffs) == m.evaluate_block(b, coeffs));
  CHECK(m.count_parameters().per_block[static_cast<size_t>(b)] == 0);
}

TEST_CASE("layout offsets can be permuted") {
  // Reordering the blocks inside the coefficient vector changes nothing as
  // long as the coefficients move with them.
  const StockData data = stock(6);
  RegimeConfig c;
  c.catch_sd = parse_partition_spec(json::parse("[0,0,1,1,2,2]"), 6);
  c.survey_sd_default = MaximalRegime{};
  const ParamMap m(data, c);
  std::mt19937_64 rng(6);
  const Eigen::VectorXd coeffs = random_vector(m.n_variance_coefs(), rng);
  std::vector<int> ids;
  for (int id = 0; id < static_cast<int>(m.blocks().size()); ++id) {
    if (penalty_group(m.block(id).family) == PenaltyGroup::Variance) ids.push_back(id);
  }
  std::vector<int> order(ids.rbegin(), ids.rend());
  Eigen::VectorXd permuted(coeffs.size());
  std::vector<int> new_offset(m.blocks().size());
  int pos = 0;
  for (int id : order) {
    const ParamBlock& b = m.block(id);
    permuted.segment(pos, b.n_coef) = coeffs.segment(b.offset, b.n_coef);
    new_offset[static_cast<size_t>(id)] = pos;
    pos += b.n_coef;
  }
  for (int id : ids) {
    const ParamBlock& b = m.block(id);
    const Eigen::VectorXd v = b.design * permuted.segment(new_offset[static_cast<size_t>(id)], b.n_coef);
    CHECK(v == m.evaluate_block(id, coeffs));
  }
}
