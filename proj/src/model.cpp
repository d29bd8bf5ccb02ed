#include "samspline/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "samspline/error.hpp"

namespace samspline {

namespace {

struct PriorTerm {
  template <class T>
  T operator()(const std::array<T, 1>& x) const {
    return gaussian_nll(x[0], T(0.0), T(std::log(kDiffuseSd)));
  }
};

struct RecruitTerm {  // logN[y,0], logN[y-1,0], log_sd_R
  template <class T>
  T operator()(const std::array<T, 3>& x) const {
    return gaussian_nll(x[0], x[1], x[2]);
  }
};

struct SurvivalTerm {  // logN[y,a], logN[y-1,a-1], logF[y-1,a-1], log_sd_N
  double M;
  template <class T>
  T operator()(const std::array<T, 4>& x) const {
    return gaussian_nll(x[0], survival_mean(x[1], x[2], M), x[3]);
  }
};

struct PlusGroupTerm {  // logN[y,A-1], logN/logF[y-1,A-2], logN/logF[y-1,A-1], log_sd_N
  double M_prev;
  double M_plus;
  template <class T>
  T operator()(const std::array<T, 6>& x) const {
    return gaussian_nll(x[0], plus_group_mean(x[1], x[2], M_prev, x[3], x[4], M_plus), x[5]);
  }
};

struct CatchTerm {  // logN, logF, log_sigma
  double logc;
  double M;
  template <class T>
  T operator()(const std::array<T, 3>& x) const {
    return gaussian_nll(T(logc), baranov_log_catch(x[0], x[1], M), x[2]);
  }
};

struct SurveyTerm {  // logN, logF, logQ, log_omega
  double logi;
  double M;
  double timing;
  template <class T>
  T operator()(const std::array<T, 4>& x) const {
    return gaussian_nll(T(logi), survey_log_mean(x[0], x[1], M, timing, x[2]), x[3]);
  }
};

int position_in(const std::vector<int>& v, int x) {
  auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) return -1;
  return static_cast<int>(it - v.begin());
}

}  // namespace

StockModel::StockModel(const StockData& data, const ModelConfig& config)
    : data_(data), config_(config) {
  if (data_.n_years() < 2) throw Error(ErrorCode::DataTooSmall, "at least 2 years of data are required");
  map_ = ParamMap(data_, config_.regimes, config_.spline);
  Y_ = data_.n_years();
  A_ = data_.n_ages();
  if (config_.f_groups.empty()) {
    f_groups_.assign(static_cast<size_t>(A_), 0);
  } else {
    if (static_cast<int>(config_.f_groups.size()) != A_) {
      throw Error(ErrorCode::ConfigInvalid, "f_groups has " + std::to_string(config_.f_groups.size()) +
                                                " entries for " + std::to_string(A_) + " ages");
    }
    f_groups_ = config_.f_groups;
  }
  G_ = *std::max_element(f_groups_.begin(), f_groups_.end()) + 1;
  M_ = samspline::natural_mortality(data_, Y_);
  build_layout();
  build_terms();
}

void StockModel::build_layout() {
  outer_names_ = {"log_sd_R", "log_sd_N"};
  for (int g = 0; g < G_; ++g) outer_names_.push_back("log_sd_F[" + std::to_string(g) + "]");
  outer_names_.push_back("rho_F_logit");
  for (const auto& b : map_.blocks()) {
    if (!b.owns_coefficients || b.family == BlockFamily::Catchability) continue;
    const std::string base = b.family == BlockFamily::CatchSd ? "log_sd_catch" : "log_sd_survey" + std::to_string(b.fleet);
    for (int k = 0; k < b.n_coef; ++k) outer_names_.push_back(base + "[" + std::to_string(k) + "]");
  }
  if (map_.has_penalty(PenaltyGroup::Variance)) {
    lambda_var_ = static_cast<int>(outer_names_.size());
    outer_names_.push_back("log_lambda_variance");
  }
  if (map_.has_penalty(PenaltyGroup::Catchability)) {
    lambda_q_ = static_cast<int>(outer_names_.size());
    outer_names_.push_back("log_lambda_catchability");
  }
  const int n = static_cast<int>(outer_names_.size());
  fixed_.assign(static_cast<size_t>(n), false);
  fixed_values_ = Eigen::VectorXd::Zero(n);
  for (const auto& [name, v] : config_.fixed) {
    const int i = outer_index(name);
    fixed_[static_cast<size_t>(i)] = true;
    fixed_values_[i] = v;
  }
  if (config_.fixed_rho_F) {
    fixed_[static_cast<size_t>(idx_rho_F())] = true;
    fixed_values_[idx_rho_F()] = logit_from_rho(*config_.fixed_rho_F, A_);
  }
}

int StockModel::outer_index(const std::string& name) const {
  auto it = std::find(outer_names_.begin(), outer_names_.end(), name);
  if (it == outer_names_.end()) {
    throw Error(ErrorCode::ConfigInvalid, "unknown parameter '" + name + "'");
  }
  return static_cast<int>(it - outer_names_.begin());
}

LocalVar StockModel::block_value_refs(int block_id, int age_index) const {
  const ParamBlock& b = map_.block(block_id);
  const int p = position_in(b.ages, age_index);
  if (p < 0) {
    throw Error(ErrorCode::InvalidArgument, "block does not cover age index " + std::to_string(age_index));
  }
  const bool inner = b.family == BlockFamily::Catchability;
  const int n_inner = 2 * Y_ * A_ + map_.n_catchability_coefs();
  LocalVar refs;
  for (int c = 0; c < b.n_coef; ++c) {
    const double w = b.design(p, c);
    if (w == 0.0) continue;
    const int k = b.offset + c;
    refs.push_back({inner ? q_coef_index(k) : n_inner + idx_var_coef(k), w});
  }
  if (refs.empty()) throw Error(ErrorCode::InvariantViolation, "design row is all zero");
  return refs;
}

void StockModel::build_terms() {
  const int n_inner = 2 * Y_ * A_ + map_.n_catchability_coefs();
  const int n_outer = static_cast<int>(outer_names_.size());
  problem_ = LaplaceProblem(n_inner, n_outer);
  auto outer = [&](int i) { return LocalVar{{n_inner + i, 1.0}}; };
  auto var = [](int i) { return LocalVar{{i, 1.0}}; };

  for (int a = 0; a < A_; ++a) {
    problem_.add_term(make_auto_term<1>(PriorTerm{}), {var(logN_index(0, a))});
    problem_.add_term(make_auto_term<1>(PriorTerm{}), {var(logF_index(0, a))});
  }
  std::vector<int> groups = f_groups_;
  for (int y = 1; y < Y_; ++y) {
    problem_.add_term(make_auto_term<3>(RecruitTerm{}),
                      {var(logN_index(y, 0)), var(logN_index(y - 1, 0)), outer(idx_log_sd_R())});
    for (int a = 1; a + 1 < A_; ++a) {
      problem_.add_term(make_auto_term<4>(SurvivalTerm{M_(y - 1, a - 1)}),
                        {var(logN_index(y, a)), var(logN_index(y - 1, a - 1)), var(logF_index(y - 1, a - 1)),
                         outer(idx_log_sd_N())});
    }
    problem_.add_term(make_auto_term<6>(PlusGroupTerm{M_(y - 1, A_ - 2), M_(y - 1, A_ - 1)}),
                      {var(logN_index(y, A_ - 1)), var(logN_index(y - 1, A_ - 2)),
                       var(logF_index(y - 1, A_ - 2)), var(logN_index(y - 1, A_ - 1)),
                       var(logF_index(y - 1, A_ - 1)), outer(idx_log_sd_N())});
    std::vector<LocalVar> fv;
    for (int a = 0; a < A_; ++a) fv.push_back({{logF_index(y, a), 1.0}, {logF_index(y - 1, a), -1.0}});
    for (int g = 0; g < G_; ++g) fv.push_back(outer(idx_log_sd_F(g)));
    fv.push_back(outer(idx_rho_F()));
    problem_.add_term(std::make_unique<FIncrementTerm>(groups), std::move(fv));
  }

  for (const auto& r : data_.obs) {
    if (r.missing) continue;
    const int y = data_.year_index(r.year);
    const int a = data_.ages.index(r.age);
    const double x = std::log(r.value);
    if (r.fleet == 0) {
      problem_.add_term(make_auto_term<3>(CatchTerm{x, M_(y, a)}),
                        {var(logN_index(y, a)), var(logF_index(y, a)),
                         block_value_refs(map_.block_id(BlockFamily::CatchSd, 0), a)});
    } else {
      problem_.add_term(make_auto_term<4>(SurveyTerm{x, M_(y, a), data_.fleets[static_cast<size_t>(r.fleet)].timing}),
                        {var(logN_index(y, a)), var(logF_index(y, a)),
                         block_value_refs(map_.block_id(BlockFamily::Catchability, r.fleet), a),
                         block_value_refs(map_.block_id(BlockFamily::SurveySd, r.fleet), a)});
    }
  }

  for (const auto& b : map_.blocks()) {
    if (!b.owns_coefficients || !b.spline) continue;
    if (b.spline->S_tilde.size() != 1) {
      throw Error(ErrorCode::InvariantViolation, "one penalty matrix per spline block expected");
    }
    PenaltyPriorTerm term(b.spline->S_tilde[0], b.spline->rank[0], b.spline->logdet[0]);
    if (b.family == BlockFamily::Catchability) {
      std::vector<LocalVar> vars;
      for (int c = 0; c < b.n_coef; ++c) vars.push_back(var(q_coef_index(b.offset + c)));
      vars.push_back(outer(*lambda_q_));
      problem_.add_term(std::make_unique<PenaltyPriorTerm>(std::move(term)), std::move(vars));
    } else {
      variance_priors_.push_back({b.offset, std::move(term)});
    }
  }
  problem_.finalize();
}

Eigen::VectorXd StockModel::initial_outer() const {
  Eigen::VectorXd t(n_outer());
  t[idx_log_sd_R()] = config_.init.log_sd_R;
  t[idx_log_sd_N()] = config_.init.log_sd_N;
  for (int g = 0; g < G_; ++g) t[idx_log_sd_F(g)] = config_.init.log_sd_F;
  t[idx_rho_F()] = logit_from_rho(config_.init.rho_F, A_);
  const Eigen::VectorXd v = map_.constant_coefficients(PenaltyGroup::Variance, config_.init.log_sd);
  for (int k = 0; k < v.size(); ++k) t[idx_var_coef(k)] = v[k];
  if (lambda_var_) t[*lambda_var_] = config_.init.log_lambda;
  if (lambda_q_) t[*lambda_q_] = config_.init.log_lambda;
  for (int i = 0; i < n_outer(); ++i) {
    if (fixed_[static_cast<size_t>(i)]) t[i] = fixed_values_[i];
  }
  return t;
}

Eigen::VectorXd StockModel::initial_inner() const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double F0 = config_.init.F;
  Eigen::MatrixXd logN = Eigen::MatrixXd::Constant(Y_, A_, nan);
  for (const auto& r : data_.obs) {
    if (r.missing || r.fleet != 0) continue;
    const int y = data_.year_index(r.year);
    const int a = data_.ages.index(r.age);
    const double Z = F0 + M_(y, a);
    logN(y, a) = std::log(r.value) - (std::log(F0) - std::log(Z) + std::log(-std::expm1(-Z)));
  }
  // Fill gaps from the nearest year, then from the nearest age.
  std::vector<bool> col_ok(static_cast<size_t>(A_), false);
  for (int a = 0; a < A_; ++a) {
    for (int y = 0; y < Y_; ++y) {
      if (!std::isnan(logN(y, a))) continue;
      for (int d = 1; d < Y_; ++d) {
        if (y - d >= 0 && !std::isnan(logN(y - d, a))) {
          logN(y, a) = logN(y - d, a);
          break;
        }
        if (y + d < Y_ && !std::isnan(logN(y + d, a))) {
          logN(y, a) = logN(y + d, a);
          break;
        }
      }
    }
    col_ok[static_cast<size_t>(a)] = !std::isnan(logN(0, a));
  }
  for (int a = 0; a < A_; ++a) {
    if (col_ok[static_cast<size_t>(a)]) continue;
    for (int d = 1; d < A_; ++d) {
      if (a - d >= 0 && col_ok[static_cast<size_t>(a - d)]) {
        logN.col(a) = logN.col(a - d);
        break;
      }
      if (a + d < A_ && col_ok[static_cast<size_t>(a + d)]) {
        logN.col(a) = logN.col(a + d);
        break;
      }
    }
    if (std::isnan(logN(0, a))) logN.col(a).setConstant(10.0);
  }
  Eigen::VectorXd u(n_inner());
  for (int y = 0; y < Y_; ++y) {
    for (int a = 0; a < A_; ++a) {
      u[logN_index(y, a)] = logN(y, a);
      u[logF_index(y, a)] = std::log(F0);
    }
  }
  const Eigen::VectorXd q = map_.constant_coefficients(PenaltyGroup::Catchability, config_.init.log_q);
  for (int k = 0; k < q.size(); ++k) u[q_coef_index(k)] = q[k];
  return u;
}

double StockModel::log_prior_variance(const Eigen::VectorXd& theta) const {
  if (!lambda_var_) return 0.0;
  const double rho = theta[*lambda_var_];
  const Eigen::VectorXd beta = variance_coefs(theta);
  double v = 0.0;
  for (const auto& p : variance_priors_) {
    const int n = static_cast<int>(p.term.size()) - 1;
    v -= p.term.value(beta.segment(p.offset, n), rho, nullptr, nullptr);
  }
  return v;
}

double StockModel::log_prior_penalties(const Eigen::VectorXd& theta) const {
  std::vector<double> rho;
  if (lambda_var_) rho.push_back(theta[*lambda_var_]);
  if (lambda_q_) rho.push_back(theta[*lambda_q_]);
  return log_prior_rho(Eigen::Map<Eigen::VectorXd>(rho.data(), static_cast<Eigen::Index>(rho.size())),
                       config_.priors.K, config_.priors.delta);
}

double StockModel::outer_penalty(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
  if (grad) *grad = Eigen::VectorXd::Zero(n_outer());
  double v = 0.0;
  if (lambda_var_) {
    const double rho = theta[*lambda_var_];
    const Eigen::VectorXd beta = variance_coefs(theta);
    for (const auto& p : variance_priors_) {
      const int n = static_cast<int>(p.term.size()) - 1;
      Eigen::VectorXd gb;
      double gr = 0.0;
      v += p.term.value(beta.segment(p.offset, n), rho, &gb, &gr);
      if (grad) {
        for (int k = 0; k < n; ++k) (*grad)[idx_var_coef(p.offset + k)] += gb[k];
        (*grad)[*lambda_var_] += gr;
      }
    }
  }
  std::vector<int> idx;
  if (lambda_var_) idx.push_back(*lambda_var_);
  if (lambda_q_) idx.push_back(*lambda_q_);
  Eigen::VectorXd rho(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) rho[static_cast<Eigen::Index>(i)] = theta[idx[i]];
  Eigen::VectorXd gr;
  v -= log_prior_rho(rho, config_.priors.K, config_.priors.delta, &gr);
  if (grad) {
    for (size_t i = 0; i < idx.size(); ++i) (*grad)[idx[i]] -= gr[static_cast<Eigen::Index>(i)];
  }
  return v;
}

LatentStates StockModel::states(const Eigen::VectorXd& u) const {
  LatentStates s;
  s.logN.resize(Y_, A_);
  s.logF.resize(Y_, A_);
  for (int y = 0; y < Y_; ++y) {
    for (int a = 0; a < A_; ++a) {
      s.logN(y, a) = u[logN_index(y, a)];
      s.logF(y, a) = u[logF_index(y, a)];
    }
  }
  return s;
}

ProcessParams StockModel::process_params(const Eigen::VectorXd& theta) const {
  ProcessParams p;
  p.sd_logR = std::exp(theta[idx_log_sd_R()]);
  p.sd_logN = std::exp(theta[idx_log_sd_N()]);
  p.sd_logF.clear();
  for (int g = 0; g < G_; ++g) p.sd_logF.push_back(std::exp(theta[idx_log_sd_F(g)]));
  p.rho_F = rho_from_logit(theta[idx_rho_F()], A_);
  p.f_groups = f_groups_;
  return p;
}

Eigen::VectorXd StockModel::variance_coefs(const Eigen::VectorXd& theta) const {
  return theta.segment(idx_var_coef(0), map_.n_variance_coefs());
}

Eigen::VectorXd StockModel::catchability_coefs(const Eigen::VectorXd& u) const {
  return u.segment(q_coef_index(0), map_.n_catchability_coefs());
}

ObsParams StockModel::obs_params(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const int J = data_.n_surveys();
  ObsParams p;
  p.log_sigma = Eigen::VectorXd::Constant(A_, nan);
  p.log_omega = Eigen::MatrixXd::Constant(J, A_, nan);
  p.log_q = Eigen::MatrixXd::Constant(J, A_, nan);
  const Eigen::VectorXd bv = variance_coefs(theta);
  const Eigen::VectorXd bq = catchability_coefs(u);
  for (int id = 0; id < static_cast<int>(map_.blocks().size()); ++id) {
    const ParamBlock& b = map_.block(id);
    const Eigen::VectorXd v = map_.evaluate_block(id, b.family == BlockFamily::Catchability ? bq : bv);
    for (size_t i = 0; i < b.ages.size(); ++i) {
      const int a = b.ages[i];
      const double x = v[static_cast<Eigen::Index>(i)];
      switch (b.family) {
        case BlockFamily::CatchSd: p.log_sigma[a] = x; break;
        case BlockFamily::SurveySd: p.log_omega(b.fleet - 1, a) = x; break;
        case BlockFamily::Catchability: p.log_q(b.fleet - 1, a) = x; break;
      }
    }
  }
  return p;
}

double StockModel::joint_nll(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const {
  const LatentStates s = states(u);
  const double v = process_nll(s, process_params(theta), M_) + obs_nll(s, obs_params(u, theta), data_);
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteDensity, "joint negative log-likelihood is not finite");
  return v;
}

}  // namespace samspline
