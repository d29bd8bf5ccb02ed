#include "samspline/validation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/tools/toms748_solve.hpp>

#include "samspline/csv.hpp"
#include "samspline/error.hpp"
#include "samspline/population_model.hpp"

namespace samspline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMinSurveyYears = 5;
constexpr int kMinForwardYears = 6;

// Years with at least one non-missing record, per fleet.
std::vector<std::set<int>> observed_years(const StockData& data) {
  std::vector<std::set<int>> out(data.fleets.size());
  for (const auto& r : data.obs) {
    if (!r.missing) out[static_cast<size_t>(r.fleet)].insert(r.year);
  }
  return out;
}

int count_before(const std::set<int>& years, int y) {
  return static_cast<int>(std::distance(years.begin(), years.lower_bound(y)));
}

}  // namespace

const char* to_string(FoldKind kind) { return kind == FoldKind::CV ? "cv" : "forward"; }

const char* to_string(RmseScale scale) { return scale == RmseScale::Raw ? "raw" : "log"; }

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::CvCatch: return "cv_catch";
    case Criterion::CvSurvey: return "cv_survey";
    case Criterion::FwdCatch: return "fwd_catch";
    case Criterion::FwdSurvey: return "fwd_survey";
    case Criterion::FwdConditionalCatch: return "fwd_conditional_catch";
  }
  return "?";
}

std::string FoldSpec::key() const { return std::string(to_string(kind)) + "-" + std::to_string(target_year); }

std::vector<FoldSpec> make_folds(const StockData& data, FoldKind kind) {
  const int Y = data.n_years();
  const auto seen = observed_years(data);
  const int J = static_cast<int>(data.fleets.size());
  std::vector<FoldSpec> folds;
  if (kind == FoldKind::CV) {
    for (int i = 1; i < Y; ++i) {
      FoldSpec f;
      f.kind = kind;
      f.target_year = data.years[static_cast<size_t>(i)];
      f.last_year = data.last_year();
      for (int j = 0; j < J; ++j) {
        const auto& s = seen[static_cast<size_t>(j)];
        if (!s.count(f.target_year)) continue;
        if (s.size() == 1) continue;  // would remove the whole fleet
        f.masked_fleets.push_back(j);
      }
      folds.push_back(std::move(f));
    }
    return folds;
  }
  if (Y < kMinForwardYears) {
    throw Error(ErrorCode::TooFewYears, "forward validation needs " + std::to_string(kMinForwardYears) +
                                            " years, data has " + std::to_string(Y));
  }
  const int n_target = (Y + 2) / 3;
  for (int i = Y - n_target; i < Y; ++i) {
    FoldSpec f;
    f.kind = kind;
    f.target_year = data.years[static_cast<size_t>(i)];
    f.last_year = f.target_year;
    for (int j = 0; j < J; ++j) {
      const auto& s = seen[static_cast<size_t>(j)];
      if (j > 0 && count_before(s, f.target_year) < kMinSurveyYears) {
        f.dropped_fleets.push_back(j);
        continue;
      }
      if (s.count(f.target_year)) f.masked_fleets.push_back(j);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

FoldData fold_training_data(const StockData& data, const FoldSpec& fold) {
  if (fold.target_year <= data.first_year() || fold.last_year > data.last_year() ||
      fold.target_year > fold.last_year) {
    throw Error(ErrorCode::YearOutOfRange, "fold " + fold.key() + " does not fit the data years");
  }
  FoldData out;
  out.fleet_map.assign(data.fleets.size(), -1);
  StockData& t = out.train;
  t.ages = data.ages;
  for (int y : data.years) {
    if (y <= fold.last_year) t.years.push_back(y);
  }
  for (const auto& m : data.fleets) {
    if (std::find(fold.dropped_fleets.begin(), fold.dropped_fleets.end(), m.fleet) != fold.dropped_fleets.end()) {
      continue;
    }
    FleetMeta nm = m;
    nm.fleet = static_cast<int>(t.fleets.size());
    nm.last_year = std::min(nm.last_year, fold.last_year);
    out.fleet_map[static_cast<size_t>(m.fleet)] = nm.fleet;
    t.fleets.push_back(nm);
  }
  for (const auto& r : data.obs) {
    const int nf = out.fleet_map[static_cast<size_t>(r.fleet)];
    if (nf < 0 || r.year > fold.last_year) continue;
    ObsRecord c = r;
    c.fleet = nf;
    if (r.year == fold.target_year &&
        std::find(fold.masked_fleets.begin(), fold.masked_fleets.end(), r.fleet) != fold.masked_fleets.end()) {
      c.missing = true;
    }
    t.obs.push_back(c);
  }
  t.aux = data.aux;
  return out;
}

ModelConfig fold_config(const ModelConfig& config, const std::vector<int>& fleet_map) {
  ModelConfig c = config;
  auto remap = [&](int f) { return f >= 0 && f < static_cast<int>(fleet_map.size()) ? fleet_map[static_cast<size_t>(f)] : -1; };
  auto remap_map = [&](std::map<int, BlockRegime>& m) {
    std::map<int, BlockRegime> n;
    for (auto& [f, r] : m) {
      if (remap(f) >= 0) n[remap(f)] = r;
    }
    m = std::move(n);
  };
  auto remap_alias = [&](std::map<int, int>& m) {
    std::map<int, int> n;
    for (auto& [f, g] : m) {
      if (remap(f) >= 0 && remap(g) >= 0) n[remap(f)] = remap(g);
    }
    m = std::move(n);
  };
  remap_map(c.regimes.survey_sd);
  remap_map(c.regimes.catchability);
  remap_alias(c.regimes.survey_sd_alias);
  remap_alias(c.regimes.catchability_alias);
  std::map<std::string, double> fixed;
  const std::string prefix = "log_sd_survey";
  for (const auto& [name, v] : c.fixed) {
    if (name.rfind(prefix, 0) == 0) {
      const auto br = name.find('[');
      const int f = std::stoi(name.substr(prefix.size(), br - prefix.size()));
      if (remap(f) < 0) continue;
      fixed[prefix + std::to_string(remap(f)) + name.substr(br)] = v;
    } else {
      fixed[name] = v;
    }
  }
  c.fixed = std::move(fixed);
  return c;
}

std::vector<CellPrediction> predict_fold(const FitResult& fit, const FoldSpec& fold, const StockData& data,
                                         bool lognormal_mean) {
  if (!fit.converged) throw Error(ErrorCode::NotConverged, "fit for fold " + fold.key() + " did not converge");
  const auto yit = std::find(fit.years.begin(), fit.years.end(), fold.target_year);
  if (yit == fit.years.end()) {
    throw Error(ErrorCode::YearOutOfRange, "fit does not cover year " + std::to_string(fold.target_year));
  }
  const int yi = static_cast<int>(yit - fit.years.begin());
  std::vector<int> fleet_map(data.fleets.size(), -1);
  for (size_t j = 0, k = 0; j < data.fleets.size(); ++j) {
    if (std::find(fold.dropped_fleets.begin(), fold.dropped_fleets.end(), static_cast<int>(j)) ==
        fold.dropped_fleets.end()) {
      fleet_map[j] = static_cast<int>(k++);
    }
  }
  const AuxTable& Mt = data.table(AuxKind::NaturalMortality);
  std::vector<CellPrediction> out;
  for (const auto& r : data.obs) {
    if (r.year != fold.target_year || r.missing) continue;
    if (std::find(fold.masked_fleets.begin(), fold.masked_fleets.end(), r.fleet) == fold.masked_fleets.end()) {
      continue;
    }
    const int a = data.ages.index(r.age);
    const double logN = fit.states.logN(yi, a);
    const double logF = fit.states.logF(yi, a);
    const double M = Mt.at(r.year, a);
    double mu = kNaN, log_sd = kNaN;
    if (r.fleet == 0) {
      mu = catch_mean_log(logN, logF, M).value_or(-std::numeric_limits<double>::infinity());
      log_sd = fit.obs_params.log_sigma[a];
    } else {
      const int s = fleet_map[static_cast<size_t>(r.fleet)] - 1;
      const double timing = data.fleets[static_cast<size_t>(r.fleet)].timing;
      mu = survey_mean_log(logN, logF, M, timing, fit.obs_params.log_q(s, a));
      log_sd = fit.obs_params.log_omega(s, a);
    }
    if (lognormal_mean) mu += 0.5 * std::exp(2.0 * log_sd);
    out.push_back({r.year, r.fleet, r.age, r.value, std::exp(mu)});
  }
  return out;
}

ConditionalForecast conditional_catch_forecast(const Eigen::VectorXd& N, const Eigen::VectorXd& F,
                                               const Eigen::VectorXd& M, const Eigen::VectorXd& weight,
                                               double biomass) {
  const Eigen::Index A = N.size();
  if (F.size() != A || M.size() != A || weight.size() != A) {
    throw Error(ErrorCode::LengthMismatch, "forecast inputs must have one entry per age");
  }
  if (!(biomass > 0.0) || !std::isfinite(biomass)) {
    throw Error(ErrorCode::InvalidArgument, "catch biomass must be positive");
  }
  auto catches = [&](double s) {
    Eigen::VectorXd c(A);
    for (Eigen::Index a = 0; a < A; ++a) {
      const double f = s * F[a];
      const double z = f + M[a];
      c[a] = z > 0.0 ? f / z * -std::expm1(-z) * N[a] : 0.0;
    }
    return c;
  };
  auto total = [&](double s) { return weight.dot(catches(s)); };
  // F -> infinity catches every fish.
  double max_biomass = 0.0;
  for (Eigen::Index a = 0; a < A; ++a) {
    if (F[a] > 0.0) max_biomass += weight[a] * N[a];
  }
  if (biomass >= max_biomass) {
    std::ostringstream os;
    os << "catch biomass " << biomass << " is not attainable; the maximum is " << max_biomass;
    throw Error(ErrorCode::NoRoot, os.str());
  }
  double hi = 1.0;
  for (int k = 0; total(hi) < biomass; ++k) {
    if (k > 1100) throw Error(ErrorCode::NoRoot, "no F multiplier reaches the catch biomass");
    hi *= 2.0;
  }
  const double lo = 0.0;
  std::uintmax_t iters = 200;
  const auto bracket = boost::math::tools::toms748_solve(
      [&](double s) { return total(s) - biomass; }, lo, hi, -biomass, total(hi) - biomass,
      boost::math::tools::eps_tolerance<double>(52), iters);
  double s = 0.5 * (bracket.first + bracket.second);
  if (std::abs(total(bracket.first) - biomass) < std::abs(total(s) - biomass)) s = bracket.first;
  if (std::abs(total(bracket.second) - biomass) < std::abs(total(s) - biomass)) s = bracket.second;
  ConditionalForecast out;
  out.scale = s;
  out.catch_at_age = catches(s);
  out.biomass = weight.dot(out.catch_at_age);
  return out;
}

ConditionalForecast conditional_catch_forecast(const FitResult& fit, const StockData& data, int target_year,
                                               double biomass) {
  const auto yit = std::find(fit.years.begin(), fit.years.end(), target_year);
  if (yit == fit.years.end()) {
    throw Error(ErrorCode::YearOutOfRange, "fit does not cover year " + std::to_string(target_year));
  }
  const int yi = static_cast<int>(yit - fit.years.begin());
  const int fi = std::max(0, yi - 1);
  const Eigen::VectorXd N = fit.states.logN.row(yi).transpose().array().exp();
  const Eigen::VectorXd F = fit.states.logF.row(fi).transpose().array().exp();
  const Eigen::VectorXd M = data.table(AuxKind::NaturalMortality).row(target_year);
  const Eigen::VectorXd w = data.table(AuxKind::CatchWeight).row(target_year);
  return conditional_catch_forecast(N, F, M, w, biomass);
}

double observed_catch_biomass(const StockData& data, int year) {
  const AuxTable& w = data.table(AuxKind::CatchWeight);
  double b = 0.0;
  for (const auto& r : data.obs) {
    if (r.fleet == 0 && r.year == year && !r.missing) b += w.at(year, data.ages.index(r.age)) * r.value;
  }
  return b;
}

double rmse(const std::vector<double>& predicted, const std::vector<double>& observed, RmseScale scale) {
  if (predicted.size() != observed.size()) {
    throw Error(ErrorCode::LengthMismatch, "predicted and observed differ in length");
  }
  if (predicted.empty()) throw Error(ErrorCode::EmptySet, "no pairs to compare");
  double ss = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double d = scale == RmseScale::Raw ? predicted[i] - observed[i]
                                             : std::log(predicted[i]) - std::log(observed[i]);
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

namespace {

// Cells of one run grouped by criterion.
std::map<Criterion, std::vector<const CellPrediction*>> cells_by_criterion(const FoldRun& run) {
  std::map<Criterion, std::vector<const CellPrediction*>> out;
  const bool cv = run.fold.kind == FoldKind::CV;
  for (const auto& p : run.predictions) {
    const Criterion c = p.fleet == 0 ? (cv ? Criterion::CvCatch : Criterion::FwdCatch)
                                     : (cv ? Criterion::CvSurvey : Criterion::FwdSurvey);
    out[c].push_back(&p);
  }
  for (const auto& p : run.conditional) out[Criterion::FwdConditionalCatch].push_back(&p);
  return out;
}

double rmse_of(const std::vector<const CellPrediction*>& cells, RmseScale scale) {
  std::vector<double> p, o;
  for (const auto* c : cells) {
    p.push_back(c->predicted);
    o.push_back(c->observed);
  }
  return rmse(p, o, scale);
}

// Folds on which every model converged.
std::set<std::string> shared_folds(const std::vector<FoldRun>& runs, const std::vector<std::string>& models) {
  std::map<std::string, std::set<std::string>> ok;
  std::set<std::string> all;
  for (const auto& r : runs) {
    all.insert(r.fold.key());
    if (r.converged) ok[r.fold.key()].insert(r.model);
  }
  std::set<std::string> out;
  for (const auto& k : all) {
    bool every = true;
    for (const auto& m : models) every = every && ok[k].count(m);
    if (every) out.insert(k);
  }
  return out;
}

}  // namespace

EvalReport summarize(const std::vector<FoldRun>& runs, const std::vector<std::string>& models,
                     const std::string& stock) {
  EvalReport rep;
  rep.stock = stock;
  rep.models = models;
  const auto shared = shared_folds(runs, models);
  for (const auto scale : {RmseScale::Raw, RmseScale::Log}) {
    for (const auto& run : runs) {
      const auto cells = cells_by_criterion(run);
      const std::vector<Criterion> crits =
          run.fold.kind == FoldKind::CV
              ? std::vector<Criterion>{Criterion::CvCatch, Criterion::CvSurvey}
              : std::vector<Criterion>{Criterion::FwdCatch, Criterion::FwdSurvey, Criterion::FwdConditionalCatch};
      for (const auto c : crits) {
        auto it = cells.find(c);
        if (run.converged && it == cells.end()) continue;
        RmseEntry e{run.model, c, scale, run.fold.key(), run.converged, kNaN};
        if (run.converged) e.value = rmse_of(it->second, scale);
        rep.entries.push_back(e);
      }
    }
    for (const auto& m : models) {
      std::map<Criterion, std::vector<const CellPrediction*>> pooled;
      for (const auto& run : runs) {
        if (run.model != m || !shared.count(run.fold.key())) continue;
        for (auto& [c, v] : cells_by_criterion(run)) pooled[c].insert(pooled[c].end(), v.begin(), v.end());
      }
      for (const auto& [c, v] : pooled) rep.entries.push_back({m, c, scale, "pooled", true, rmse_of(v, scale)});
    }
  }
  return rep;
}

EvalReport standardize(const EvalReport& report, const std::string& baseline) {
  if (std::find(report.models.begin(), report.models.end(), baseline) == report.models.end()) {
    throw Error(ErrorCode::BaselineMissing, "model '" + baseline + "' is not in the report");
  }
  // Folds where some model failed are left out.
  std::map<std::string, std::set<std::string>> ok;
  std::set<std::string> keys;
  for (const auto& e : report.entries) {
    keys.insert(e.fold);
    if (e.converged) ok[e.fold].insert(e.model);
  }
  for (const auto& e : report.entries) {
    if (!e.converged) ok[e.fold].erase(e.model);
  }
  std::set<std::string> shared;
  for (const auto& k : keys) {
    bool every = true;
    for (const auto& m : report.models) every = every && ok[k].count(m);
    if (every) shared.insert(k);
  }
  using Key = std::tuple<Criterion, RmseScale, std::string>;
  std::map<Key, double> base;
  for (const auto& e : report.entries) {
    if (e.model == baseline) base[{e.criterion, e.scale, e.fold}] = e.value;
  }
  EvalReport out;
  out.stock = report.stock;
  out.models = report.models;
  out.baseline = baseline;
  for (const auto& e : report.entries) {
    if (!shared.count(e.fold)) continue;
    auto it = base.find({e.criterion, e.scale, e.fold});
    if (it == base.end()) continue;
    RmseEntry r = e;
    r.value = e.model == baseline ? 1.0 : e.value / it->second;
    out.entries.push_back(r);
  }
  return out;
}

std::vector<TallyRow> tally_convergence(const std::vector<FoldRun>& runs) {
  std::vector<std::string> models;
  std::map<std::string, TallyRow> rows;
  std::map<std::string, bool> fold_ok;
  for (const auto& r : runs) {
    if (!rows.count(r.model)) {
      models.push_back(r.model);
      rows[r.model].model = r.model;
    }
    auto& row = rows[r.model];
    ++row.total;
    if (r.converged) ++row.converged;
    auto [it, fresh] = fold_ok.emplace(r.fold.key(), r.converged);
    if (!fresh) it->second = it->second && r.converged;
  }
  std::vector<TallyRow> out;
  for (const auto& m : models) out.push_back(rows[m]);
  TallyRow all{"All", 0, static_cast<int>(fold_ok.size())};
  for (const auto& [k, v] : fold_ok) all.converged += v ? 1 : 0;
  out.push_back(all);
  return out;
}

ValidationResult run_validation(const StockData& data, const std::vector<ModelConfig>& configs,
                                const ValidationOptions& options) {
  if (configs.empty()) throw Error(ErrorCode::InvalidArgument, "no configs to validate");
  std::set<std::string> names;
  for (const auto& c : configs) {
    if (!names.insert(c.name).second) {
      throw Error(ErrorCode::ConfigInvalid, "config name '" + c.name + "' is used twice");
    }
  }
  ValidationResult res;
  res.version = build_version();
  res.options = options;
  if (options.mode != ValidationMode::Forward) {
    auto f = make_folds(data, FoldKind::CV);
    res.folds.insert(res.folds.end(), f.begin(), f.end());
  }
  if (options.mode != ValidationMode::CV) {
    auto f = make_folds(data, FoldKind::Forward);
    res.folds.insert(res.folds.end(), f.begin(), f.end());
  }
  const size_t C = configs.size();
  const size_t n_tasks = res.folds.size() * C;
  res.runs.resize(n_tasks);

  auto run_one = [&](size_t task) {
    const FoldSpec& fold = res.folds[task / C];
    const ModelConfig& base_cfg = configs[task % C];
    FoldRun& run = res.runs[task];
    run.model = base_cfg.name;
    run.fold = fold;
    try {
      const FoldData fd = fold_training_data(data, fold);
      const FitResult fr = fit(fd.train, fold_config(base_cfg, fd.fleet_map));
      run.converged = fr.converged;
      run.message = fr.reason;
      if (!fr.converged) return;
      run.predictions = predict_fold(fr, fold, data, options.lognormal_mean);
      if (fold.kind == FoldKind::Forward) {
        const double b = observed_catch_biomass(data, fold.target_year);
        if (b > 0.0) {
          try {
            const auto cf = conditional_catch_forecast(fr, data, fold.target_year, b);
            for (const auto& p : run.predictions) {
              if (p.fleet != 0) continue;
              CellPrediction c = p;
              c.predicted = cf.catch_at_age[data.ages.index(p.age)];
              run.conditional.push_back(c);
            }
          } catch (const Error& e) {
            run.message = e.what();
          }
        }
      }
    } catch (const std::exception& e) {
      run.converged = false;
      run.message = e.what();
      run.predictions.clear();
      run.conditional.clear();
    }
  };

  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(std::max<size_t>(1, n_tasks))));
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t t = next++; t < n_tasks; t = next++) run_one(t);
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<std::string> models;
  for (const auto& c : configs) models.push_back(c.name);
  res.report = summarize(res.runs, models, options.stock);
  res.standardized = standardize(res.report, models.front());
  std::vector<FoldRun> cv, fwd;
  for (const auto& r : res.runs) (r.fold.kind == FoldKind::CV ? cv : fwd).push_back(r);
  if (!cv.empty()) res.tally_cv = tally_convergence(cv);
  if (!fwd.empty()) res.tally_forward = tally_convergence(fwd);
  return res;
}

namespace {

nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json entries_json(const EvalReport& rep) {
  auto arr = nlohmann::json::array();
  for (const auto& e : rep.entries) {
    arr.push_back({{"model", e.model},
                   {"criterion", to_string(e.criterion)},
                   {"scale", to_string(e.scale)},
                   {"fold", e.fold},
                   {"converged", e.converged},
                   {"value", json_number(e.value)}});
  }
  return arr;
}

nlohmann::json tally_json(const std::vector<TallyRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back({{"model", r.model}, {"converged", r.converged}, {"total", r.total}});
  return arr;
}

nlohmann::json cells_json(const std::vector<CellPrediction>& cells) {
  auto arr = nlohmann::json::array();
  for (const auto& c : cells) {
    arr.push_back({{"year", c.year}, {"fleet", c.fleet}, {"age", c.age}, {"observed", c.observed},
                   {"predicted", json_number(c.predicted)}});
  }
  return arr;
}

std::string fmt(double v) { return std::isfinite(v) ? csv::format_double(v) : "NA"; }

}  // namespace

nlohmann::json to_json(const ValidationResult& r) {
  nlohmann::json j;
  j["version"] = r.version;
  j["stock"] = r.report.stock;
  j["models"] = r.report.models;
  j["baseline"] = r.report.models.empty() ? "" : r.report.models.front();
  j["rmse_scale"] = to_string(r.options.scale);
  j["lognormal_mean"] = r.options.lognormal_mean;
  auto folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"key", f.key()},
                     {"kind", to_string(f.kind)},
                     {"target_year", f.target_year},
                     {"last_year", f.last_year},
                     {"masked_fleets", f.masked_fleets},
                     {"dropped_fleets", f.dropped_fleets}});
  }
  j["folds"] = folds;
  j["convergence"] = {{"cv", tally_json(r.tally_cv)}, {"forward", tally_json(r.tally_forward)}};
  j["rmse"] = entries_json(r.report);
  j["standardized_rmse"] = entries_json(r.standardized);
  auto runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"model", run.model},
                    {"fold", run.fold.key()},
                    {"converged", run.converged},
                    {"message", run.message},
                    {"predictions", cells_json(run.predictions)},
                    {"conditional", cells_json(run.conditional)}});
  }
  j["runs"] = runs;
  return j;
}

void write_validation_outputs(const ValidationResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw Error(ErrorCode::MissingFile, "cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("report.json");
    os << to_json(r).dump(2) << "\n";
  }
  {
    // Primary scale first, then the other one.
    auto os = open("report.csv");
    os << "stock,model,fold,criterion,rmse,converged,scale\n";
    for (const auto scale : {r.options.scale, r.options.scale == RmseScale::Raw ? RmseScale::Log : RmseScale::Raw}) {
      for (const auto& e : r.report.entries) {
        if (e.scale != scale) continue;
        os << r.report.stock << "," << e.model << "," << e.fold << "," << to_string(e.criterion) << ","
           << fmt(e.value) << "," << (e.converged ? "true" : "false") << "," << to_string(e.scale) << "\n";
      }
    }
  }
  {
    auto os = open("boxplot_data.csv");
    os << "stock,model,criterion,scale,fold,standardized_rmse\n";
    for (const auto& e : r.standardized.entries) {
      os << r.standardized.stock << "," << e.model << "," << to_string(e.criterion) << "," << to_string(e.scale)
         << "," << e.fold << "," << fmt(e.value) << "\n";
    }
  }
  {
    auto os = open("convergence.csv");
    os << "mode,model,converged,total\n";
    for (const auto& row : r.tally_cv) os << "cv," << row.model << "," << row.converged << "," << row.total << "\n";
    for (const auto& row : r.tally_forward) {
      os << "forward," << row.model << "," << row.converged << "," << row.total << "\n";
    }
  }
}

}  // namespace samspline
