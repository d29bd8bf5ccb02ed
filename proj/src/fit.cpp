#include "samspline/fit.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "samspline/csv.hpp"
#include "samspline/error.hpp"
#include "samspline/optimizer.hpp"

#ifndef SAMSPLINE_VERSION
#define SAMSPLINE_VERSION "unknown"
#endif

namespace samspline {

using nlohmann::json;

std::string build_version() { return std::string("samspline ") + SAMSPLINE_VERSION; }

// ---------------------------------------------------------------------------

OuterObjective::OuterObjective(const StockModel& model)
    : model_(&model),
      solver_(model.problem(), InnerOptions{model.config().optimizer.inner_tol, model.config().optimizer.inner_max_iter}),
      start_(model.initial_inner()),
      warm_(start_) {}

void OuterObjective::reset_warm_start() { warm_ = start_; }

template <class Fn>
auto OuterObjective::with_restart(Fn&& fn) -> decltype(fn(Eigen::VectorXd())) {
  try {
    return fn(warm_);
  } catch (const Error&) {
    if (warm_ == start_) throw;
  }
  return fn(start_);
}

double OuterObjective::laplace_marginal(const Eigen::VectorXd& theta, InnerResult* inner) {
  InnerResult r;
  const double v = with_restart([&](const Eigen::VectorXd& s) { return solver_.marginal(theta, s, &r); });
  warm_ = r.mode;
  if (inner) *inner = std::move(r);
  return v;
}

double OuterObjective::evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, InnerResult* inner) {
  double v = 0.0;
  if (grad) {
    auto g = with_restart([&](const Eigen::VectorXd& s) { return solver_.marginal_with_gradient(theta, s); });
    Eigen::VectorXd gp;
    v = g.value + model_->outer_penalty(theta, &gp);
    *grad = g.grad + gp;
    warm_ = g.inner.mode;
    if (inner) *inner = std::move(g.inner);
  } else {
    v = laplace_marginal(theta, inner) + model_->outer_penalty(theta);
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteDensity, "objective is not finite");
  return v;
}

// ---------------------------------------------------------------------------

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

struct FreeLayout {
  std::vector<int> idx;
  Eigen::VectorXd base;
  Eigen::VectorXd expand(const Eigen::VectorXd& x) const {
    Eigen::VectorXd t = base;
    for (size_t i = 0; i < idx.size(); ++i) t[idx[i]] = x[static_cast<Eigen::Index>(i)];
    return t;
  }
  Eigen::VectorXd select(const Eigen::VectorXd& t) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) x[static_cast<Eigen::Index>(i)] = t[idx[i]];
    return x;
  }
};

}  // namespace

FitResult fit(const StockData& data, const ModelConfig& config) {
  validate(data, false);
  StockModel model(data, config);
  return fit(model, model.initial_outer());
}

FitResult fit(const StockModel& model, const Eigen::VectorXd& theta0) {
  const auto t_start = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model.config();
  const StockData& data = model.data();
  FitResult r;
  r.model = cfg.name;
  r.version = build_version();
  r.outer_names = model.outer_names();
  r.outer_fixed = model.fixed_mask();
  r.ages = data.ages;
  r.years = data.years;
  r.fleets = data.fleets;
  r.inner_n = model.n_inner();

  FreeLayout layout;
  layout.base = theta0;
  for (int i = 0; i < model.n_outer(); ++i) {
    if (!model.fixed_mask()[static_cast<size_t>(i)]) layout.idx.push_back(i);
  }
  const int nf = static_cast<int>(layout.idx.size());

  OuterObjective obj(model);
  std::string last_error;
  GradientObjective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::VectorXd gf;
    try {
      const double v = obj.evaluate(layout.expand(x), &gf);
      g = layout.select(gf);
      return v;
    } catch (const Error& e) {
      last_error = e.what();
      throw;
    }
  };

  auto finish_time = [&] {
    r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  BfgsOptions bo{cfg.optimizer.max_iter, cfg.optimizer.grad_tol};
  BfgsResult b = minimize_bfgs(f, layout.select(theta0), bo);
  if (!std::isfinite(b.f)) {
    r.objective_initial = kNaN;
    r.objective = kNaN;
    r.reason = "evaluation failed at the initial point: " + last_error;
    r.outer_estimates = theta0;
    r.outer_se = Eigen::VectorXd::Constant(model.n_outer(), kNaN);
    r.evaluations = b.evaluations;
    finish_time();
    return r;
  }
  r.objective_initial = b.f_initial;
  int iterations = b.iterations;
  int evaluations = b.evaluations;
  for (int k = 0; k < cfg.optimizer.restarts && !b.converged; ++k) {
    BfgsResult b2 = minimize_bfgs(f, b.x, bo);
    iterations += b2.iterations;
    evaluations += b2.evaluations;
    if (std::isfinite(b2.f) && b2.f <= b.f) b = std::move(b2);
  }

  // Outer Hessian from central differences of the gradient.
  Eigen::VectorXd x = b.x;
  Eigen::MatrixXd Hout(nf, nf);
  auto fd_hessian = [&](const Eigen::VectorXd& at) {
    for (int i = 0; i < nf; ++i) {
      const double h = 1e-4 * std::max(1.0, std::abs(at[i]));
      Eigen::VectorXd xp = at, xm = at, gp, gm;
      xp[i] += h;
      xm[i] -= h;
      f(xp, gp);
      f(xm, gm);
      evaluations += 2;
      Hout.col(i) = (gp - gm) / (2 * h);
    }
    Hout = 0.5 * (Hout + Hout.transpose()).eval();
  };
  bool hessian_ok = false;
  try {
    if (nf > 0) fd_hessian(x);
    hessian_ok = true;
  } catch (const Error& e) {
    last_error = e.what();
  }
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (hessian_ok && nf > 0) {
    llt.compute(Hout);
    r.hessian_pd = llt.info() == Eigen::Success;
    // A few Newton steps on the converged point sharpen the gradient.
    if (r.hessian_pd && b.converged) {
      Eigen::VectorXd g = b.g;
      double fx = b.f;
      for (int k = 0; k < 3 && g.lpNorm<Eigen::Infinity>() > 1e-9; ++k) {
        const Eigen::VectorXd xn = x - llt.solve(g);
        Eigen::VectorXd gn;
        double fn = 0.0;
        try {
          fn = f(xn, gn);
          ++evaluations;
        } catch (const Error&) {
          break;
        }
        if (!(fn <= fx) || !(gn.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>())) break;
        x = xn;
        g = gn;
        fx = fn;
      }
      b.x = x;
      b.f = fx;
      b.g = g;
    }
  } else if (hessian_ok) {
    r.hessian_pd = true;
  }

  // Final evaluation leaves the inner factorization at the estimate.
  const Eigen::VectorXd theta = layout.expand(x);
  InnerResult inner;
  Eigen::VectorXd gfull;
  try {
    r.objective = obj.evaluate(theta, &gfull, &inner);
  } catch (const Error& e) {
    r.objective = kNaN;
    r.reason = std::string("evaluation failed at the estimate: ") + e.what();
    r.outer_estimates = theta;
    r.outer_se = Eigen::VectorXd::Constant(model.n_outer(), kNaN);
    r.iterations = iterations;
    r.evaluations = evaluations;
    finish_time();
    return r;
  }
  ++evaluations;
  const Eigen::VectorXd gfree = layout.select(gfull);
  r.gradient_norm = nf > 0 ? gfree.lpNorm<Eigen::Infinity>() : 0.0;
  r.nll_marginal = r.objective - model.outer_penalty(theta);
  r.iterations = iterations;
  r.evaluations = evaluations;
  r.outer_estimates = theta;
  r.inner_mode = inner.mode;
  r.inner_logdet = inner.logdet;
  r.inner_factor_nnz = inner.nnz_factor;
  if (auto i = model.idx_log_lambda_variance()) r.lambda_variance = std::exp(theta[*i]);
  if (auto i = model.idx_log_lambda_catchability()) r.lambda_catchability = std::exp(theta[*i]);

  const bool grad_ok = r.gradient_norm <= cfg.optimizer.grad_tol * std::max(1.0, std::abs(r.objective));
  r.converged = grad_ok && r.hessian_pd;
  if (r.converged) {
    r.reason = "converged";
  } else if (!grad_ok) {
    r.reason = "gradient tolerance not met (" + b.message + ")";
  } else if (!hessian_ok) {
    r.reason = "outer Hessian evaluation failed: " + last_error;
  } else {
    r.reason = "outer Hessian not positive definite";
  }

  // Uncertainties.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(nf, nf, kNaN);
  if (r.hessian_pd && nf > 0) cov = llt.solve(Eigen::MatrixXd::Identity(nf, nf));
  r.outer_se = Eigen::VectorXd::Constant(model.n_outer(), kNaN);
  for (int i = 0; i < nf; ++i) r.outer_se[layout.idx[static_cast<size_t>(i)]] = std::sqrt(cov(i, i));

  const Eigen::MatrixXd& Hut = obj.solver().cross_hessian();
  const int nu = model.n_inner();
  auto delta_var = [&](const Eigen::VectorXd& gu, const Eigen::VectorXd& gt) {
    double v = 0.0;
    Eigen::VectorXd tot = gt;
    if (gu.size() > 0 && gu.squaredNorm() > 0) {
      const Eigen::VectorXd z = obj.solver().solve(gu);
      v += gu.dot(z);
      tot -= Hut.transpose() * z;
    }
    const Eigen::VectorXd tf = layout.select(tot);
    if (nf > 0 && tf.squaredNorm() > 0) v += tf.dot(cov * tf);
    return v;
  };

  r.states = model.states(inner.mode);
  r.process = model.process_params(theta);
  r.obs_params = model.obs_params(inner.mode, theta);
  const auto& blocks = model.param_map().blocks();
  for (int id = 0; id < static_cast<int>(blocks.size()); ++id) {
    const ParamBlock& blk = blocks[static_cast<size_t>(id)];
    CurveEstimate c;
    c.family = blk.family;
    c.fleet = blk.fleet;
    const auto n = static_cast<Eigen::Index>(blk.ages.size());
    c.estimate.resize(n);
    c.se.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = blk.ages[static_cast<size_t>(i)];
      c.ages.push_back(data.ages.age(a));
      switch (blk.family) {
        case BlockFamily::CatchSd: c.estimate[i] = r.obs_params.log_sigma[a]; break;
        case BlockFamily::SurveySd: c.estimate[i] = r.obs_params.log_omega(blk.fleet - 1, a); break;
        case BlockFamily::Catchability: c.estimate[i] = r.obs_params.log_q(blk.fleet - 1, a); break;
      }
      Eigen::VectorXd gu = Eigen::VectorXd::Zero(nu), gt = Eigen::VectorXd::Zero(model.n_outer());
      for (const auto& ref : model.block_value_refs(id, a)) {
        if (ref.index < nu) {
          gu[ref.index] += ref.coef;
        } else {
          gt[ref.index - nu] += ref.coef;
        }
      }
      c.se[i] = std::sqrt(delta_var(gu, gt));
    }
    r.curves.push_back(std::move(c));
  }

  const int Y = model.n_years();
  const int A = model.n_ages();
  r.ssb = samspline::ssb(r.states, data);
  r.ssb_se.resize(Y);
  for (int y = 0; y < Y; ++y) {
    const int year = data.years[static_cast<size_t>(y)];
    Eigen::VectorXd gu = Eigen::VectorXd::Zero(nu);
    for (int a = 0; a < A; ++a) {
      const double F = std::exp(r.states.logF(y, a));
      const double M = data.table(AuxKind::NaturalMortality).at(year, a);
      const double pf = data.table(AuxKind::PropFBeforeSpawn).at(year, a);
      const double pm = data.table(AuxKind::PropMBeforeSpawn).at(year, a);
      const double w = std::exp(r.states.logN(y, a) - pf * F - pm * M) *
                       data.table(AuxKind::Maturity).at(year, a) * data.table(AuxKind::StockWeight).at(year, a);
      gu[model.logN_index(y, a)] = w;
      gu[model.logF_index(y, a)] = -pf * F * w;
    }
    r.ssb_se[y] = std::sqrt(delta_var(gu, Eigen::VectorXd::Zero(model.n_outer())));
  }
  finish_time();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

json mat(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
  return a;
}

double get_num(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Eigen::VectorXd get_vec(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = get_num(j[i]);
  return v;
}

Eigen::MatrixXd get_mat(const json& j) {
  if (j.empty()) return Eigen::MatrixXd();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (size_t i = 0; i < j.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = get_vec(j[i]).transpose();
  return m;
}

BlockFamily family_from(const std::string& s) {
  if (s == "log_sd_catch") return BlockFamily::CatchSd;
  if (s == "log_sd_survey") return BlockFamily::SurveySd;
  if (s == "log_q") return BlockFamily::Catchability;
  throw Error(ErrorCode::ParseError, "unknown block '" + s + "'");
}

}  // namespace

json to_json(const FitResult& r) {
  json j;
  j["model"] = r.model;
  j["version"] = r.version;
  j["convergence"] = {{"converged", r.converged},
                      {"reason", r.reason},
                      {"gradient_norm", num(r.gradient_norm)},
                      {"hessian_pd", r.hessian_pd},
                      {"iterations", r.iterations},
                      {"evaluations", r.evaluations},
                      {"runtime_seconds", r.runtime_seconds}};
  j["objective"] = num(r.objective);
  j["objective_initial"] = num(r.objective_initial);
  j["nll_marginal"] = num(r.nll_marginal);
  j["lambda_hat"] = {{"variance", r.lambda_variance ? num(*r.lambda_variance) : json(nullptr)},
                     {"catchability", r.lambda_catchability ? num(*r.lambda_catchability) : json(nullptr)}};
  json est = json::array();
  for (size_t i = 0; i < r.outer_names.size(); ++i) {
    est.push_back({{"name", r.outer_names[i]},
                   {"estimate", num(r.outer_estimates[static_cast<Eigen::Index>(i)])},
                   {"se", num(r.outer_se[static_cast<Eigen::Index>(i)])},
                   {"fixed", r.outer_fixed[i]}});
  }
  j["parameters"] = est;
  j["inner"] = {{"n", r.inner_n},
                {"factor_nnz", r.inner_factor_nnz},
                {"logdet_hessian", num(r.inner_logdet)},
                {"mode", vec(r.inner_mode)}};
  j["ages"] = {{"min", r.ages.min_age}, {"max", r.ages.max_age}};
  j["years"] = r.years;
  json fl = json::array();
  for (const auto& f : r.fleets) {
    fl.push_back({{"fleet", f.fleet},
                  {"kind", f.kind == FleetKind::Catch ? "catch" : "survey"},
                  {"timing", f.timing},
                  {"source_id", f.source_id}});
  }
  j["fleets"] = fl;
  j["process"] = {{"sd_logR", num(r.process.sd_logR)},
                  {"sd_logN", num(r.process.sd_logN)},
                  {"sd_logF", r.process.sd_logF},
                  {"rho_F", num(r.process.rho_F)},
                  {"f_groups", r.process.f_groups}};
  j["states"] = {{"logN", mat(r.states.logN)}, {"logF", mat(r.states.logF)}};
  j["obs_params"] = {{"log_sigma", vec(r.obs_params.log_sigma)},
                     {"log_omega", mat(r.obs_params.log_omega)},
                     {"log_q", mat(r.obs_params.log_q)}};
  json curves = json::array();
  for (const auto& c : r.curves) {
    curves.push_back({{"block", to_string(c.family)},
                      {"fleet", c.fleet},
                      {"ages", c.ages},
                      {"estimate", vec(c.estimate)},
                      {"se", vec(c.se)}});
  }
  j["curves"] = curves;
  j["ssb"] = {{"estimate", vec(r.ssb)}, {"se", vec(r.ssb_se)}};
  return j;
}

FitResult fit_result_from_json(const json& j) {
  try {
    FitResult r;
    r.model = j.at("model").get<std::string>();
    r.version = j.value("version", "");
    const auto& c = j.at("convergence");
    r.converged = c.at("converged").get<bool>();
    r.reason = c.value("reason", "");
    r.gradient_norm = get_num(c.at("gradient_norm"));
    r.hessian_pd = c.value("hessian_pd", false);
    r.iterations = c.value("iterations", 0);
    r.evaluations = c.value("evaluations", 0);
    r.runtime_seconds = c.value("runtime_seconds", 0.0);
    r.objective = get_num(j.at("objective"));
    r.objective_initial = get_num(j.at("objective_initial"));
    r.nll_marginal = get_num(j.at("nll_marginal"));
    const auto& lh = j.at("lambda_hat");
    if (!lh.at("variance").is_null()) r.lambda_variance = lh.at("variance").get<double>();
    if (!lh.at("catchability").is_null()) r.lambda_catchability = lh.at("catchability").get<double>();
    const auto& ps = j.at("parameters");
    r.outer_estimates.resize(static_cast<Eigen::Index>(ps.size()));
    r.outer_se.resize(static_cast<Eigen::Index>(ps.size()));
    for (size_t i = 0; i < ps.size(); ++i) {
      r.outer_names.push_back(ps[i].at("name").get<std::string>());
      r.outer_estimates[static_cast<Eigen::Index>(i)] = get_num(ps[i].at("estimate"));
      r.outer_se[static_cast<Eigen::Index>(i)] = get_num(ps[i].at("se"));
      r.outer_fixed.push_back(ps[i].at("fixed").get<bool>());
    }
    const auto& in = j.at("inner");
    r.inner_n = in.at("n").get<int>();
    r.inner_factor_nnz = in.at("factor_nnz").get<int>();
    r.inner_logdet = get_num(in.at("logdet_hessian"));
    r.inner_mode = get_vec(in.at("mode"));
    r.ages = {j.at("ages").at("min").get<int>(), j.at("ages").at("max").get<int>()};
    r.years = j.at("years").get<std::vector<int>>();
    for (const auto& f : j.at("fleets")) {
      FleetMeta m;
      m.fleet = f.at("fleet").get<int>();
      m.kind = f.at("kind") == "catch" ? FleetKind::Catch : FleetKind::Survey;
      m.timing = f.at("timing").get<double>();
      m.source_id = f.at("source_id").get<int>();
      r.fleets.push_back(m);
    }
    const auto& p = j.at("process");
    r.process.sd_logR = get_num(p.at("sd_logR"));
    r.process.sd_logN = get_num(p.at("sd_logN"));
    r.process.sd_logF = p.at("sd_logF").get<std::vector<double>>();
    r.process.rho_F = get_num(p.at("rho_F"));
    r.process.f_groups = p.at("f_groups").get<std::vector<int>>();
    r.states.logN = get_mat(j.at("states").at("logN"));
    r.states.logF = get_mat(j.at("states").at("logF"));
    r.obs_params.log_sigma = get_vec(j.at("obs_params").at("log_sigma"));
    r.obs_params.log_omega = get_mat(j.at("obs_params").at("log_omega"));
    r.obs_params.log_q = get_mat(j.at("obs_params").at("log_q"));
    for (const auto& cj : j.at("curves")) {
      CurveEstimate ce;
      ce.family = family_from(cj.at("block").get<std::string>());
      ce.fleet = cj.at("fleet").get<int>();
      ce.ages = cj.at("ages").get<std::vector<int>>();
      ce.estimate = get_vec(cj.at("estimate"));
      ce.se = get_vec(cj.at("se"));
      r.curves.push_back(std::move(ce));
    }
    r.ssb = get_vec(j.at("ssb").at("estimate"));
    r.ssb_se = get_vec(j.at("ssb").at("se"));
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed fit result: ") + e.what());
  }
}

std::string curves_csv(const FitResult& r) {
  std::ostringstream out;
  out << "block,fleet,age,estimate,se\n";
  for (const auto& c : r.curves) {
    for (size_t i = 0; i < c.ages.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      out << to_string(c.family) << ',' << c.fleet << ',' << c.ages[i] << ','
          << (std::isfinite(c.estimate[k]) ? csv::format_double(c.estimate[k]) : "NA") << ','
          << (std::isfinite(c.se[k]) ? csv::format_double(c.se[k]) : "NA") << '\n';
    }
  }
  return out.str();
}

}  // namespace samspline
