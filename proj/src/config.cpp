#include "samspline/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "samspline/error.hpp"

namespace samspline {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw Error(ErrorCode::ConfigInvalid, "unknown key '" + k + "' in " + where);
  }
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw Error(ErrorCode::ConfigInvalid, key + " must be a number");
  return j.get<double>();
}

int fleet_key(const std::string& key, const std::string& where) {
  try {
    size_t pos = 0;
    const int f = std::stoi(key, &pos);
    if (pos != key.size()) throw std::invalid_argument(key);
    return f;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, where + ": '" + key + "' is not a fleet id");
  }
}

// A family entry is either one regime for all surveys or an object keyed by
// fleet id with an optional "default".
void parse_family(const json& j, BlockRegime& fallback, std::map<int, BlockRegime>& per_fleet,
                  const std::string& where) {
  if (j.is_object() && !j.contains("partition")) {
    for (const auto& [k, v] : j.items()) {
      if (k == "default") {
        fallback = parse_regime(v);
      } else {
        per_fleet[fleet_key(k, where)] = parse_regime(v);
      }
    }
  } else {
    fallback = parse_regime(j);
  }
}

std::map<int, int> parse_alias(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, where + " must map fleet ids to fleet ids");
  std::map<int, int> out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number_integer()) throw Error(ErrorCode::ConfigInvalid, where + " targets must be integers");
    out[fleet_key(k, where)] = v.get<int>();
  }
  return out;
}

}  // namespace

BlockRegime parse_regime(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "spline_cs") return SplineRegime{BasisKind::CubicRegressionShrinkage};
    if (s == "spline_bs") return SplineRegime{BasisKind::BSpline};
    if (s == "maximal") return MaximalRegime{};
    throw Error(ErrorCode::ConfigInvalid, "unknown regime '" + s + "'");
  }
  const json* spec = &j;
  if (j.is_object()) {
    check_keys(j, {"partition"}, "regime");
    spec = &j.at("partition");
  }
  if (!spec->is_array()) throw Error(ErrorCode::ConfigInvalid, "regime must be a name or a partition array");
  return parse_partition_spec(*spec, static_cast<int>(spec->size()));
}

json regime_to_json(const BlockRegime& regime) {
  if (const auto* p = std::get_if<PartitionRegime>(&regime)) return json{{"partition", p->groups}};
  if (std::holds_alternative<MaximalRegime>(regime)) return "maximal";
  return std::get<SplineRegime>(regime).kind == BasisKind::BSpline ? "spline_bs" : "spline_cs";
}

ModelConfig parse_config(const json& j) {
  ModelConfig c;
  if (j.is_null()) return c;
  check_keys(j,
             {"name", "recruitment", "catch_sd", "survey_sd", "catchability", "survey_sd_alias",
              "catchability_alias", "f_groups", "rho_F", "priors", "bs_degree", "init", "fixed",
              "optimizer", "rmse_scale", "lognormal_mean", "seed"},
             "config");
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  if (j.contains("recruitment") && j.at("recruitment") != "random_walk") {
    throw Error(ErrorCode::ConfigInvalid, "only random_walk recruitment is supported");
  }
  if (j.contains("catch_sd")) c.regimes.catch_sd = parse_regime(j.at("catch_sd"));
  if (j.contains("survey_sd")) {
    parse_family(j.at("survey_sd"), c.regimes.survey_sd_default, c.regimes.survey_sd, "survey_sd");
  }
  if (j.contains("catchability")) {
    parse_family(j.at("catchability"), c.regimes.catchability_default, c.regimes.catchability,
                 "catchability");
  }
  if (j.contains("survey_sd_alias")) c.regimes.survey_sd_alias = parse_alias(j.at("survey_sd_alias"), "survey_sd_alias");
  if (j.contains("catchability_alias")) {
    c.regimes.catchability_alias = parse_alias(j.at("catchability_alias"), "catchability_alias");
  }
  if (j.contains("f_groups")) {
    const auto& g = j.at("f_groups");
    if (!g.is_array()) throw Error(ErrorCode::ConfigInvalid, "f_groups must be an array");
    c.f_groups = parse_partition_spec(g, static_cast<int>(g.size())).groups;
    for (int v : c.f_groups) {
      if (v < 0) throw Error(ErrorCode::ConfigInvalid, "f_groups must cover every age");
    }
  }
  if (j.contains("rho_F")) {
    const auto& r = j.at("rho_F");
    if (r.is_string()) {
      if (r != "estimate") throw Error(ErrorCode::ConfigInvalid, "rho_F must be \"estimate\" or a number");
    } else {
      c.fixed_rho_F = get_number(r, "rho_F");
      if (!(*c.fixed_rho_F > -1.0 && *c.fixed_rho_F < 1.0)) {
        throw Error(ErrorCode::ConfigInvalid, "rho_F must lie in (-1, 1)");
      }
    }
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    check_keys(p, {"K", "delta", "shrinkage_epsilon", "downweight_young"}, "priors");
    if (p.contains("K")) c.priors.K = get_number(p.at("K"), "K");
    if (p.contains("delta")) c.priors.delta = get_number(p.at("delta"), "delta");
    if (p.contains("shrinkage_epsilon")) c.spline.shrinkage_epsilon = get_number(p.at("shrinkage_epsilon"), "shrinkage_epsilon");
    if (p.contains("downweight_young")) c.spline.downweight_young = p.at("downweight_young").get<bool>();
    if (!(c.priors.delta > 0)) throw Error(ErrorCode::ConfigInvalid, "delta must be positive");
    if (!(c.spline.shrinkage_epsilon > 0)) throw Error(ErrorCode::ConfigInvalid, "shrinkage_epsilon must be positive");
  }
  if (j.contains("bs_degree")) {
    c.spline.bs_degree = j.at("bs_degree").get<int>();
    if (c.spline.bs_degree < 1) throw Error(ErrorCode::ConfigInvalid, "bs_degree must be >= 1");
  }
  if (j.contains("init")) {
    const auto& i = j.at("init");
    check_keys(i, {"log_q", "log_sd", "log_lambda", "log_sd_R", "log_sd_N", "log_sd_F", "rho_F", "F"}, "init");
    auto set = [&](const char* k, double& v) {
      if (i.contains(k)) v = get_number(i.at(k), k);
    };
    set("log_q", c.init.log_q);
    set("log_sd", c.init.log_sd);
    set("log_lambda", c.init.log_lambda);
    set("log_sd_R", c.init.log_sd_R);
    set("log_sd_N", c.init.log_sd_N);
    set("log_sd_F", c.init.log_sd_F);
    set("rho_F", c.init.rho_F);
    set("F", c.init.F);
    if (!(c.init.F > 0)) throw Error(ErrorCode::ConfigInvalid, "init.F must be positive");
  }
  if (j.contains("fixed")) {
    const auto& f = j.at("fixed");
    if (!f.is_object()) throw Error(ErrorCode::ConfigInvalid, "fixed must be an object");
    for (const auto& [k, v] : f.items()) c.fixed[k] = get_number(v, k);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, {"max_iter", "grad_tol", "inner_tol", "inner_max_iter", "restarts"}, "optimizer");
    if (o.contains("max_iter")) c.optimizer.max_iter = o.at("max_iter").get<int>();
    if (o.contains("grad_tol")) c.optimizer.grad_tol = get_number(o.at("grad_tol"), "grad_tol");
    if (o.contains("inner_tol")) c.optimizer.inner_tol = get_number(o.at("inner_tol"), "inner_tol");
    if (o.contains("inner_max_iter")) c.optimizer.inner_max_iter = o.at("inner_max_iter").get<int>();
    if (o.contains("restarts")) c.optimizer.restarts = o.at("restarts").get<int>();
  }
  if (j.contains("rmse_scale")) {
    const auto s = j.at("rmse_scale").get<std::string>();
    if (s == "raw") {
      c.rmse_scale = RmseScale::Raw;
    } else if (s == "log") {
      c.rmse_scale = RmseScale::Log;
    } else {
      throw Error(ErrorCode::ConfigInvalid, "rmse_scale must be raw or log");
    }
  }
  if (j.contains("lognormal_mean")) c.lognormal_mean = j.at("lognormal_mean").get<bool>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    const std::string text = ss.str();
    j = text.find_first_not_of(" \t\r\n") == std::string::npos ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
}

json to_json(const ModelConfig& c) {
  json j;
  j["name"] = c.name;
  j["recruitment"] = "random_walk";
  j["catch_sd"] = regime_to_json(c.regimes.catch_sd);
  json s{{"default", regime_to_json(c.regimes.survey_sd_default)}};
  for (const auto& [f, r] : c.regimes.survey_sd) s[std::to_string(f)] = regime_to_json(r);
  j["survey_sd"] = s;
  json q{{"default", regime_to_json(c.regimes.catchability_default)}};
  for (const auto& [f, r] : c.regimes.catchability) q[std::to_string(f)] = regime_to_json(r);
  j["catchability"] = q;
  json sa = json::object(), qa = json::object();
  for (const auto& [f, t] : c.regimes.survey_sd_alias) sa[std::to_string(f)] = t;
  for (const auto& [f, t] : c.regimes.catchability_alias) qa[std::to_string(f)] = t;
  j["survey_sd_alias"] = sa;
  j["catchability_alias"] = qa;
  j["f_groups"] = c.f_groups;
  if (c.fixed_rho_F) {
    j["rho_F"] = *c.fixed_rho_F;
  } else {
    j["rho_F"] = "estimate";
  }
  j["priors"] = {{"K", c.priors.K},
                 {"delta", c.priors.delta},
                 {"shrinkage_epsilon", c.spline.shrinkage_epsilon},
                 {"downweight_young", c.spline.downweight_young}};
  j["bs_degree"] = c.spline.bs_degree;
  j["init"] = {{"log_q", c.init.log_q},       {"log_sd", c.init.log_sd},     {"log_lambda", c.init.log_lambda},
               {"log_sd_R", c.init.log_sd_R}, {"log_sd_N", c.init.log_sd_N}, {"log_sd_F", c.init.log_sd_F},
               {"rho_F", c.init.rho_F},       {"F", c.init.F}};
  j["fixed"] = c.fixed;
  j["optimizer"] = {{"max_iter", c.optimizer.max_iter},
                    {"grad_tol", c.optimizer.grad_tol},
                    {"inner_tol", c.optimizer.inner_tol},
                    {"inner_max_iter", c.optimizer.inner_max_iter},
                    {"restarts", c.optimizer.restarts}};
  j["rmse_scale"] = c.rmse_scale == RmseScale::Raw ? "raw" : "log";
  j["lognormal_mean"] = c.lognormal_mean;
  j["seed"] = c.seed;
  return j;
}

}  // namespace samspline
