#include "samspline/truth_io.hpp"

#include <cmath>

#include "samspline/error.hpp"

namespace samspline {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json exp_vec(const Eigen::VectorXd& v) { return vec(v.array().exp().matrix()); }

json rows(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec(m.row(r).transpose()));
  return out;
}

Eigen::VectorXd read_vec(const json& j, const char* key, int n) {
  if (!j.contains(key)) throw Error(ErrorCode::ConfigInvalid, std::string("truth: missing '") + key + "'");
  const auto v = j.at(key).get<std::vector<double>>();
  if (static_cast<int>(v.size()) != n) {
    throw Error(ErrorCode::ConfigInvalid, std::string("truth: '") + key + "' needs " + std::to_string(n) + " values");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

Eigen::VectorXd log_of(const Eigen::VectorXd& sd, const char* key) {
  if ((sd.array() < 0).any()) throw Error(ErrorCode::ConfigInvalid, std::string("truth: '") + key + "' must be >= 0");
  return sd.array().log();
}

}  // namespace

json to_json(const SimulationTruth& t) {
  json j;
  j["ages"] = {t.ages.min_age, t.ages.max_age};
  j["first_year"] = t.first_year;
  j["n_years"] = t.n_years;
  j["process"] = {{"sd_logR", t.process.sd_logR},
                  {"sd_logN", t.process.sd_logN},
                  {"sd_logF", t.process.sd_logF},
                  {"rho_F", t.process.rho_F},
                  {"f_groups", t.process.f_groups}};
  j["sd_catch"] = exp_vec(t.log_sigma);
  json surveys = json::array();
  for (size_t s = 0; s < t.surveys.size(); ++s) {
    const auto& d = t.surveys[s];
    const auto r = static_cast<Eigen::Index>(s);
    surveys.push_back({{"timing", d.timing},
                       {"ages", {d.min_age, d.max_age}},
                       {"years", {d.first_year, d.last_year}},
                       {"sd", exp_vec(t.log_omega.row(r).transpose())},
                       {"log_q", vec(t.log_q.row(r).transpose())}});
  }
  j["surveys"] = surveys;
  j["logN0"] = vec(t.logN0);
  j["logF0"] = vec(t.logF0);
  j["natural_mortality"] = vec(t.natural_mortality);
  j["stock_weight"] = vec(t.stock_weight);
  j["catch_weight"] = vec(t.catch_weight);
  j["maturity"] = vec(t.maturity);
  j["prop_f"] = vec(t.prop_f);
  j["prop_m"] = vec(t.prop_m);
  return j;
}

SimulationTruth truth_from_json(const json& j) {
  try {
    SimulationTruth t;
    const auto ages = j.at("ages").get<std::vector<int>>();
    if (ages.size() != 2) throw Error(ErrorCode::ConfigInvalid, "truth: ages must be [min, max]");
    t.ages = {ages[0], ages[1]};
    t.first_year = j.at("first_year").get<int>();
    t.n_years = j.at("n_years").get<int>();
    const int A = t.ages.count();
    if (A < 2) throw Error(ErrorCode::ConfigInvalid, "truth: need at least two ages");
    const json& p = j.at("process");
    t.process.sd_logR = p.at("sd_logR").get<double>();
    t.process.sd_logN = p.at("sd_logN").get<double>();
    t.process.sd_logF = p.at("sd_logF").get<std::vector<double>>();
    t.process.rho_F = p.value("rho_F", 0.0);
    t.process.f_groups = p.value("f_groups", std::vector<int>{});
    t.log_sigma = log_of(read_vec(j, "sd_catch", A), "sd_catch");
    const json& ss = j.at("surveys");
    const auto J = static_cast<Eigen::Index>(ss.size());
    t.log_omega.resize(J, A);
    t.log_q.resize(J, A);
    for (Eigen::Index s = 0; s < J; ++s) {
      const json& d = ss.at(static_cast<size_t>(s));
      SurveyDesign sd;
      sd.timing = d.at("timing").get<double>();
      const auto sa = d.value("ages", std::vector<int>{t.ages.min_age, t.ages.max_age});
      const auto sy = d.value("years", std::vector<int>{t.first_year, t.first_year + t.n_years - 1});
      if (sa.size() != 2 || sy.size() != 2) throw Error(ErrorCode::ConfigInvalid, "truth: survey ages/years must be pairs");
      sd.min_age = sa[0];
      sd.max_age = sa[1];
      sd.first_year = sy[0];
      sd.last_year = sy[1];
      t.surveys.push_back(sd);
      t.log_omega.row(s) = log_of(read_vec(d, "sd", A), "sd").transpose();
      t.log_q.row(s) = read_vec(d, "log_q", A).transpose();
    }
    t.logN0 = read_vec(j, "logN0", A);
    t.logF0 = read_vec(j, "logF0", A);
    t.natural_mortality = read_vec(j, "natural_mortality", A);
    t.stock_weight = read_vec(j, "stock_weight", A);
    t.catch_weight = read_vec(j, "catch_weight", A);
    t.maturity = read_vec(j, "maturity", A);
    t.prop_f = j.contains("prop_f") ? read_vec(j, "prop_f", A) : Eigen::VectorXd::Zero(A);
    t.prop_m = j.contains("prop_m") ? read_vec(j, "prop_m", A) : Eigen::VectorXd::Zero(A);
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("truth: ") + e.what());
  }
}

json simulation_record(const SimulationTruth& truth, std::uint64_t seed, const LatentStates& states) {
  json j;
  j["truth"] = to_json(truth);
  j["seed"] = seed;
  j["states"] = {{"logN", rows(states.logN)}, {"logF", rows(states.logF)}};
  return j;
}

}  // namespace samspline
