#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "samspline/config.hpp"
#include "samspline/csv.hpp"
#include "samspline/error.hpp"
#include "samspline/fit.hpp"
#include "samspline/model.hpp"
#include "samspline/stock_data.hpp"
#include "samspline/truth_io.hpp"
#include "samspline/validation.hpp"

namespace fs = std::filesystem;
using namespace samspline;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::MissingFile, path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  os << text;
}

std::string fmt(double v) { return std::isfinite(v) ? csv::format_double(v) : "NA"; }

struct FitArgs {
  std::string data, config, out, params;
  int restarts = -1;
};

int cmd_fit(const FitArgs& a) {
  const StockData data = load_stock(a.data);
  ModelConfig cfg = a.config.empty() ? ModelConfig{} : load_config(a.config);
  if (a.restarts >= 0) cfg.optimizer.restarts = a.restarts;
  const FitResult r = fit(data, cfg);
  write_text(a.out, to_json(r).dump(2) + "\n");
  const fs::path params = a.params.empty() ? fs::path(a.out).parent_path() / "params.csv" : fs::path(a.params);
  write_text(params, curves_csv(r));
  std::cerr << r.model << ": " << r.reason << " (objective " << r.objective << ", " << r.iterations
            << " iterations, " << r.runtime_seconds << " s)\n";
  return r.converged ? kExitOk : kExitNotConverged;
}

struct ValidateArgs {
  std::string data, out, mode = "both", scale, stock;
  std::vector<std::string> configs;
  int jobs = 1;
  bool lognormal_mean = false;
};

int cmd_validate(const ValidateArgs& a) {
  if (a.configs.size() < 2) throw Error(ErrorCode::InvalidArgument, "validate needs at least two configs");
  const StockData data = load_stock(a.data);
  std::vector<ModelConfig> configs;
  for (const auto& c : a.configs) configs.push_back(load_config(c));
  ValidationOptions o;
  o.mode = a.mode == "cv" ? ValidationMode::CV : a.mode == "forward" ? ValidationMode::Forward : ValidationMode::Both;
  o.jobs = a.jobs;
  o.scale = configs.front().rmse_scale;
  if (!a.scale.empty()) o.scale = a.scale == "log" ? RmseScale::Log : RmseScale::Raw;
  o.lognormal_mean = a.lognormal_mean || configs.front().lognormal_mean;
  o.stock = a.stock.empty() ? fs::path(a.data).filename().string() : a.stock;
  if (o.stock.empty()) o.stock = fs::absolute(a.data).parent_path().filename().string();
  const ValidationResult r = run_validation(data, configs, o);
  write_validation_outputs(r, a.out);
  bool all = true;
  for (const auto* t : {&r.tally_cv, &r.tally_forward}) {
    for (const auto& row : *t) {
      std::cerr << row.model << ": " << row.converged << "/" << row.total << "\n";
      if (row.model == "All") all = all && row.converged == row.total;
    }
  }
  return all ? kExitOk : kExitNotConverged;
}

struct SimulateArgs {
  std::string config, truth, out;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  const SimulationTruth truth = truth_from_json(read_json(a.truth));
  const Simulation sim = simulate(truth, a.seed);
  if (!a.config.empty()) {
    // Reject configs the simulated stock cannot carry.
    StockModel check(sim.data, load_config(a.config));
  }
  save_stock(sim.data, a.out);
  write_text(fs::path(a.out) / "truth.json", simulation_record(truth, a.seed, sim.states).dump(2) + "\n");
  return kExitOk;
}

struct CompareArgs {
  std::vector<std::string> fits;
  std::string out;
};

int cmd_compare(const CompareArgs& a) {
  if (a.fits.size() < 2) throw Error(ErrorCode::InvalidArgument, "compare needs at least two fits");
  std::vector<FitResult> fits;
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& f : a.fits) {
    fits.push_back(fit_result_from_json(read_json(f)));
    std::string name = fits.back().model;
    if (seen[name]++) name = fs::path(f).stem().string();
    names.push_back(name);
  }
  const FitResult& ref = fits.front();
  for (size_t i = 1; i < fits.size(); ++i) {
    const FitResult& f = fits[i];
    if (!(f.ages == ref.ages) || f.years != ref.years || f.fleets.size() != ref.fleets.size()) {
      throw Error(ErrorCode::StockMismatch, a.fits[i] + " is not a fit of the same stock as " + a.fits[0]);
    }
    for (size_t j = 0; j < f.fleets.size(); ++j) {
      if (f.fleets[j].kind != ref.fleets[j].kind || f.fleets[j].timing != ref.fleets[j].timing) {
        throw Error(ErrorCode::StockMismatch, a.fits[i] + " has different fleets than " + a.fits[0]);
      }
    }
  }
  std::ostringstream curves, ssb;
  curves << "model,block,fleet,age,estimate,se,lo,hi\n";
  ssb << "model,year,est,lo,hi\n";
  for (size_t i = 0; i < fits.size(); ++i) {
    const FitResult& f = fits[i];
    for (const auto& c : f.curves) {
      for (size_t k = 0; k < c.ages.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double e = c.estimate[kk], s = c.se[kk];
        curves << names[i] << "," << to_string(c.family) << "," << c.fleet << "," << c.ages[k] << "," << fmt(e) << ","
               << fmt(s) << "," << fmt(e - 1.96 * s) << "," << fmt(e + 1.96 * s) << "\n";
      }
    }
    for (size_t y = 0; y < f.years.size(); ++y) {
      const auto yy = static_cast<Eigen::Index>(y);
      const double e = f.ssb[yy], s = f.ssb_se[yy];
      ssb << names[i] << "," << f.years[y] << "," << fmt(e) << "," << fmt(e - 1.96 * s) << "," << fmt(e + 1.96 * s)
          << "\n";
    }
  }
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "curves.csv", curves.str());
  write_text(fs::path(a.out) / "ssb.csv", ssb.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-structured state-space stock assessment with spline-smoothed parameters"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print the build identifier");

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model to a stock");
  fit_cmd->add_option("--data", fa.data, "Stock data directory")->required()->check(CLI::ExistingDirectory);
  fit_cmd->add_option("--config", fa.config, "Model config (JSON); defaults to the cs-spline model");
  fit_cmd->add_option("--out", fa.out, "Fit result JSON")->required();
  fit_cmd->add_option("--params", fa.params, "Per-age curve CSV (default: params.csv next to --out)");
  fit_cmd->add_option("--restarts", fa.restarts, "Optimizer restarts from the last point after a failed fit (default 0)")
      ->check(CLI::NonNegativeNumber);

  ValidateArgs va;
  auto* val_cmd = app.add_subcommand("validate", "Cross- and forward-validation of several configs");
  val_cmd->add_option("--data", va.data, "Stock data directory")->required()->check(CLI::ExistingDirectory);
  val_cmd->add_option("--configs", va.configs, "Config files; the first is the baseline")->required();
  val_cmd->add_option("--mode", va.mode, "cv, forward or both")->check(CLI::IsMember({"cv", "forward", "both"}));
  val_cmd->add_option("--out", va.out, "Output directory")->required();
  val_cmd->add_option("--jobs", va.jobs, "Parallel fits")->check(CLI::PositiveNumber);
  val_cmd->add_option("--rmse-scale", va.scale, "raw or log")->check(CLI::IsMember({"raw", "log"}));
  val_cmd->add_flag("--lognormal-mean", va.lognormal_mean, "Predict lognormal means instead of medians");
  val_cmd->add_option("--stock", va.stock, "Stock name used in the reports");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a stock from a truth file");
  sim_cmd->add_option("--config", sa.config, "Config to check against the simulated stock");
  sim_cmd->add_option("--truth", sa.truth, "Truth JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--seed", sa.seed, "Random seed");
  sim_cmd->add_option("--out", sa.out, "Output directory")->required();

  CompareArgs ca;
  auto* cmp_cmd = app.add_subcommand("compare", "Merge parameter curves and SSB of several fits");
  cmp_cmd->add_option("--fits", ca.fits, "Fit result files")->required();
  cmp_cmd->add_option("--out", ca.out, "Output directory for curves.csv and ssb.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }
  if (version) {
    std::cout << build_version() << "\n";
    return kExitOk;
  }
  try {
    if (*fit_cmd) return cmd_fit(fa);
    if (*val_cmd) return cmd_validate(va);
    if (*sim_cmd) return cmd_simulate(sa);
    if (*cmp_cmd) return cmd_compare(ca);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  std::cerr << app.help();
  return kExitError;
}
