// Copyright 2026 The ctxpred Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctxpred/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace ctxpred {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Ols: return "ols";
    case ModelKind::LmmRandomIntercept: return "lmm_ri";
    case ModelKind::Logistic: return "logistic";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "ols") return ModelKind::Ols;
  if (s == "lmm_ri" || s == "lmm") return ModelKind::LmmRandomIntercept;
  if (s == "logistic") return ModelKind::Logistic;
  throw ContractError("unknown model kind '" + std::string(s) + "'");
}

std::size_t FitResult::index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ContractError("no coefficient named '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double FitResult::coef(const std::string& name) const { return coefficients[index(name)]; }
double FitResult::std_error(const std::string& name) const { return std_errors[index(name)]; }

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& columns) {
  if (X.rows() != y.size()) {
    throw ContractError(fmt::format("design has {} rows but response has {}", X.rows(), y.size()));
  }
  if (static_cast<std::size_t>(X.cols()) != columns.size()) {
    throw ContractError(fmt::format("design has {} columns but {} names", X.cols(), columns.size()));
  }
  if (X.rows() == 0) throw ContractError("empty design");
  if (!X.allFinite() || !y.allFinite()) throw ContractError("design or response has non-finite values");
}

Eigen::VectorXd sqrt_diag_inverse(const Eigen::MatrixXd& A, double scale) {
  const Eigen::MatrixXd inv = A.ldlt().solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  return (inv.diagonal() * scale).cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& columns) {
  const auto p = X.cols();
  if (p == 0) return;
  if (X.rows() < p) {
    throw RankDeficient(fmt::format("rank-deficient design: {} rows for {} columns", X.rows(), p), columns);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank == p) return;
  std::vector<std::string> dependent;
  const auto& perm = qr.colsPermutation().indices();
  for (auto i = rank; i < p; ++i) dependent.push_back(columns[static_cast<std::size_t>(perm[i])]);
  std::sort(dependent.begin(), dependent.end());
  std::string names;
  for (const auto& d : dependent) names += (names.empty() ? "" : ", ") + d;
  throw RankDeficient(fmt::format("rank-deficient design (rank {} of {}); dependent column(s): {}", rank, p, names),
                      dependent);
}

// --- OLS ---

FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& columns) {
  check_shapes(X, y, columns);
  check_full_rank(X, columns);
  const auto n = static_cast<double>(X.rows());
  const auto p = static_cast<double>(X.cols());

  FitResult fit;
  fit.model_kind = ModelKind::Ols;
  fit.columns = columns;
  fit.coefficients = X.colPivHouseholderQr().solve(y);
  fit.fitted = X * fit.coefficients;
  const double rss = (y - fit.fitted).squaredNorm();
  const double sigma2 = rss / n;
  fit.loglik = sigma2 > 0 ? -0.5 * n * (kLog2Pi + std::log(sigma2) + 1.0)
                          : std::numeric_limits<double>::infinity();
  fit.residual_variance = sigma2;
  const double s2 = n > p ? rss / (n - p) : std::numeric_limits<double>::quiet_NaN();
  fit.std_errors = sqrt_diag_inverse(X.transpose() * X, s2);
  fit.n_obs = static_cast<std::size_t>(X.rows());
  fit.n_params = static_cast<std::size_t>(X.cols()) + 1;
  fit.converged = true;
  return fit;
}

// --- random-intercept LMM ---

namespace {

struct GroupStats {
  double n = 0;
  Eigen::VectorXd sx;  // column sums
  double sy = 0;
};

struct LmmProfile {
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  double yty = 0;
  std::vector<GroupStats> groups;
  double n = 0;

  struct Point {
    double loglik;
    double sigma2;
    Eigen::VectorXd beta;
    Eigen::MatrixXd xhx;
  };

  Point at(double gamma) const {
    Eigen::MatrixXd xhx = xtx;
    Eigen::VectorXd xhy = xty;
    double yhy = yty;
    double logdet = 0.0;
    for (const auto& g : groups) {
      const double c = gamma / (1.0 + g.n * gamma);
      xhx.noalias() -= c * g.sx * g.sx.transpose();
      xhy -= c * g.sy * g.sx;
      yhy -= c * g.sy * g.sy;
      logdet += std::log1p(g.n * gamma);
    }
    Point pt;
    pt.beta = xhx.ldlt().solve(xhy);
    const double q = std::max(yhy - pt.beta.dot(xhy), 0.0);
    pt.sigma2 = q / n;
    pt.loglik = pt.sigma2 > 0 ? -0.5 * n * (kLog2Pi + std::log(pt.sigma2) + 1.0) - 0.5 * logdet
                              : std::numeric_limits<double>::infinity();
    pt.xhx = std::move(xhx);
    return pt;
  }
};

}  // namespace

FitResult fit_lmm_random_intercept(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const std::vector<std::size_t>& groups,
                                   const std::vector<std::string>& columns) {
  check_shapes(X, y, columns);
  if (groups.size() != static_cast<std::size_t>(y.size())) {
    throw ContractError(fmt::format("groups vector has length {} but there are {} observations", groups.size(),
                                    y.size()));
  }
  check_full_rank(X, columns);

  std::map<std::size_t, std::size_t> dense;
  for (auto g : groups) dense.emplace(g, dense.size());
  if (dense.size() < 2) {
    FitResult fit = fit_ols(X, y, columns);
    fit.warnings.push_back("single group: random-intercept variance not identifiable, fell back to OLS");
    return fit;
  }

  LmmProfile prof;
  prof.n = static_cast<double>(X.rows());
  prof.xtx = X.transpose() * X;
  prof.xty = X.transpose() * y;
  prof.yty = y.squaredNorm();
  prof.groups.assign(dense.size(), GroupStats{0, Eigen::VectorXd::Zero(X.cols()), 0});
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    auto& g = prof.groups[dense[groups[static_cast<std::size_t>(i)]]];
    g.n += 1;
    g.sx += X.row(i).transpose();
    g.sy += y[i];
  }

  const double lo = std::log(1e-10), hi = std::log(1e6);
  std::uintmax_t max_iter = 500;
  const auto best = boost::math::tools::brent_find_minima(
      [&](double t) { return -prof.at(std::exp(t)).loglik; }, lo, hi, 40, max_iter);
  double gamma = std::exp(best.first);
  auto pt = prof.at(gamma);
  const auto boundary = prof.at(0.0);
  if (boundary.loglik >= pt.loglik) {
    gamma = 0.0;
    pt = boundary;
  }

  FitResult fit;
  fit.model_kind = ModelKind::LmmRandomIntercept;
  fit.columns = columns;
  fit.coefficients = pt.beta;
  fit.fitted = X * pt.beta;
  fit.loglik = pt.loglik;
  fit.residual_variance = pt.sigma2;
  fit.group_variance = gamma * pt.sigma2;
  fit.std_errors = sqrt_diag_inverse(pt.xhx, pt.sigma2);
  fit.n_obs = static_cast<std::size_t>(X.rows());
  fit.n_params = static_cast<std::size_t>(X.cols()) + 2;
  fit.iterations = static_cast<int>(max_iter);
  fit.converged = std::isfinite(pt.loglik) && best.first < hi - 1e-6 && max_iter < 500;
  if (!fit.converged) fit.warnings.push_back("variance-ratio search did not converge inside its bounds");
  return fit;
}

// --- logistic ---

namespace {

// Log-likelihood at eta; also writes the fitted probabilities to p.
double logistic_eval(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, Eigen::VectorXd& p) {
  p.resize(eta.size());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    const double z = std::exp(-std::abs(e));
    ll += y[i] * e - (std::max(e, 0.0) + std::log1p(z));
    p[i] = e >= 0 ? 1.0 / (1.0 + z) : z / (1.0 + z);
  }
  return ll;
}

}  // namespace

FitResult fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& columns,
                       const LogisticOptions& opts) {
  check_shapes(X, y, columns);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw ContractError("logistic response must be 0 or 1");
  }
  check_full_rank(X, columns);

  Eigen::VectorXd beta = opts.start ? *opts.start : Eigen::VectorXd::Zero(X.cols());
  if (beta.size() != X.cols()) throw ContractError("logistic warm start has the wrong length");
  Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd p, p_new;
  double ll = logistic_eval(eta, y, p);
  Eigen::VectorXd score = X.transpose() * (y - p);

  FitResult fit;
  fit.model_kind = ModelKind::Logistic;
  fit.columns = columns;
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (score.cwiseAbs().maxCoeff() < opts.score_tol) {
      converged = true;
      break;
    }
    const Eigen::VectorXd w = p.array() * (1.0 - p.array());
    const Eigen::MatrixXd H = X.transpose() * (X.array().colwise() * w.array()).matrix();
    const Eigen::VectorXd delta = H.ldlt().solve(score);
    if (!delta.allFinite()) break;

    double step = 1.0;
    Eigen::VectorXd beta_new, eta_new;
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      beta_new = beta + step * delta;
      eta_new = X * beta_new;
      ll_new = logistic_eval(eta_new, y, p_new);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
    }
    if (!(ll_new >= ll - 1e-12 * std::abs(ll))) break;
    const double rel = std::abs(ll_new - ll) / std::max(std::abs(ll), 1e-300);
    beta = std::move(beta_new);
    eta = std::move(eta_new);
    ll = ll_new;
    p.swap(p_new);
    score = X.transpose() * (y - p);
    // A flat likelihood counts as converged once the score is near stationary.
    if (rel < opts.rel_tol && score.cwiseAbs().maxCoeff() < 1e-6) {
      converged = true;
      ++it;
      break;
    }
  }

  bool perfect = true;
  for (Eigen::Index i = 0; i < y.size() && perfect; ++i) {
    perfect = y[i] == 1.0 ? eta[i] > 0 : eta[i] < 0;
  }
  const double max_eta = eta.cwiseAbs().maxCoeff();
  if (perfect || (!converged && max_eta > 25.0)) {
    throw Separation(fmt::format("separation: the outcome is {}perfectly predicted (max |eta| = {:.3g}); "
                                 "coefficients diverge",
                                 perfect ? "" : "quasi-", max_eta));
  }

  const Eigen::VectorXd w = p.array() * (1.0 - p.array());
  const Eigen::MatrixXd H = X.transpose() * (X.array().colwise() * w.array()).matrix();
  fit.coefficients = beta;
  fit.std_errors = sqrt_diag_inverse(H, 1.0);
  fit.fitted = eta;
  fit.loglik = ll;
  fit.n_obs = static_cast<std::size_t>(X.rows());
  fit.n_params = static_cast<std::size_t>(X.cols());
  fit.iterations = it;
  fit.converged = converged;
  if (!converged) fit.warnings.push_back(fmt::format("IRLS stopped after {} iterations without converging", it));
  return fit;
}

// --- comparison ---

LrtResult lrt_statistic(double delta_loglik, int df) {
  if (df <= 0) throw ContractError(fmt::format("models are not nested: df = {}", df));
  if (!std::isfinite(delta_loglik)) throw ContractError("log-likelihood difference is not finite");
  LrtResult r;
  r.chi2 = std::max(2.0 * delta_loglik, 0.0);
  r.df = df;
  r.p = r.chi2 == 0.0 ? 1.0 : boost::math::gamma_q(df / 2.0, r.chi2 / 2.0);
  return r;
}

LrtResult lrt(const FitResult& small, const FitResult& big) {
  if (!small.converged || !big.converged) throw ContractError("cannot compare a fit that did not converge");
  if (small.n_obs != big.n_obs) {
    throw ContractError(fmt::format("models fit to different data: n_obs {} vs {}", small.n_obs, big.n_obs));
  }
  if (small.standardization != big.standardization) {
    throw ContractError("models use different predictor standardization ('" + small.standardization + "' vs '" +
                        big.standardization + "')");
  }
  const int df = static_cast<int>(big.n_params) - static_cast<int>(small.n_params);
  if (df <= 0) throw ContractError(fmt::format("models are not nested: df = {}", df));
  if (big.loglik < small.loglik - 1e-8) {
    throw ContractError("larger model has a lower log-likelihood; models are not nested");
  }
  return lrt_statistic(big.loglik - small.loglik, df);
}

double bic(const FitResult& fit) {
  return static_cast<double>(fit.n_params) * std::log(static_cast<double>(fit.n_obs)) - 2.0 * fit.loglik;
}

// --- bootstrap ---

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw ContractError("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

BootstrapResult bootstrap_ci(const Fitter& fitter, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const BootstrapOptions& opts) {
  if (opts.n_sims < 1) throw ContractError("bootstrap needs n_sims >= 1");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw ContractError("bootstrap level must be in (0, 1)");
  const auto n = static_cast<std::size_t>(X.rows());
  if (n == 0 || static_cast<std::size_t>(y.size()) != n) throw ContractError("bootstrap: bad data shape");

  std::vector<std::vector<std::size_t>> units;
  if (opts.clusters) {
    if (opts.clusters->size() != n) throw ContractError("bootstrap: cluster vector length mismatch");
    std::map<std::size_t, std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = idx.emplace((*opts.clusters)[i], units.size());
      if (fresh) units.emplace_back();
      units[it->second].push_back(i);
    }
  } else {
    units.resize(n);
    for (std::size_t i = 0; i < n; ++i) units[i] = {i};
  }

  std::vector<std::optional<Eigen::VectorXd>> draws(opts.n_sims);
  std::vector<std::string> errors(opts.n_sims);
  parallel_for(opts.n_sims, opts.jobs, [&](std::size_t s) {
    Rng rng = stream_rng(opts.seed, s);
    boost::random::uniform_int_distribution<std::size_t> pick(0, units.size() - 1);
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t k = 0; k < units.size(); ++k) {
      const auto& u = units[pick(rng)];
      rows.insert(rows.end(), u.begin(), u.end());
    }
    Eigen::MatrixXd Xb(static_cast<Eigen::Index>(rows.size()), X.cols());
    Eigen::VectorXd yb(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Xb.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
      yb[static_cast<Eigen::Index>(r)] = y[static_cast<Eigen::Index>(rows[r])];
    }
    try {
      FitResult f = fitter(Xb, yb);
      if (!f.converged) {
        errors[s] = "did not converge";
      } else {
        draws[s] = std::move(f.coefficients);
      }
    } catch (const Error& e) {
      errors[s] = e.what();
    }
  });

  BootstrapResult res;
  std::vector<std::vector<double>> per_coef(static_cast<std::size_t>(X.cols()));
  for (std::size_t s = 0; s < opts.n_sims; ++s) {
    if (!draws[s]) {
      res.failures.push_back(fmt::format("resample {}: {}", s, errors[s]));
      continue;
    }
    ++res.successes;
    for (Eigen::Index j = 0; j < X.cols(); ++j) per_coef[static_cast<std::size_t>(j)].push_back((*draws[s])[j]);
  }
  if (res.successes == 0) throw Error("bootstrap: every resample fit failed");
  res.coverage_warning = static_cast<double>(res.successes) < 0.95 * static_cast<double>(opts.n_sims);
  const double a = (1.0 - opts.level) / 2.0;
  for (auto& v : per_coef) res.intervals.push_back({quantile(v, a), quantile(v, 1.0 - a)});
  return res;
}

// --- serialization ---

namespace {

using ojson = nlohmann::ordered_json;

ojson num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double read_num(const nlohmann::json& j) {
  if (j.is_string()) return std::stod(j.get<std::string>());
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

std::string fit_to_json(const FitResult& fit, int indent) {
  ojson j;
  j["model_kind"] = std::string(to_string(fit.model_kind));
  j["formula_columns"] = fit.columns;
  ojson coefs = ojson::object(), ses = ojson::object();
  for (std::size_t i = 0; i < fit.columns.size(); ++i) {
    coefs[fit.columns[i]] = num(fit.coefficients[static_cast<Eigen::Index>(i)]);
    ses[fit.columns[i]] = num(fit.std_errors[static_cast<Eigen::Index>(i)]);
  }
  j["coefficients"] = std::move(coefs);
  j["std_errors"] = std::move(ses);
  j["loglik"] = num(fit.loglik);
  j["n_obs"] = fit.n_obs;
  j["n_params"] = fit.n_params;
  j["converged"] = fit.converged;
  ojson extras = ojson::object();
  if (!fit.formula.empty()) extras["formula"] = fit.formula;
  extras["standardization"] = fit.standardization;
  extras["iterations"] = fit.iterations;
  if (fit.group_variance) extras["group_variance"] = num(*fit.group_variance);
  if (fit.residual_variance) extras["residual_variance"] = num(*fit.residual_variance);
  extras["bic"] = num(bic(fit));
  extras["warnings"] = fit.warnings;
  j["extras"] = std::move(extras);
  return j.dump(indent);
}

FitResult fit_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FitResult fit;
    fit.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
    fit.columns = j.at("formula_columns").get<std::vector<std::string>>();
    const auto p = static_cast<Eigen::Index>(fit.columns.size());
    fit.coefficients.resize(p);
    fit.std_errors.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto& name = fit.columns[static_cast<std::size_t>(i)];
      fit.coefficients[i] = read_num(j.at("coefficients").at(name));
      fit.std_errors[i] = read_num(j.at("std_errors").at(name));
    }
    fit.loglik = read_num(j.at("loglik"));
    fit.n_obs = j.at("n_obs").get<std::size_t>();
    fit.n_params = j.at("n_params").get<std::size_t>();
    fit.converged = j.at("converged").get<bool>();
    if (j.contains("extras")) {
      const auto& e = j["extras"];
      fit.formula = e.value("formula", "");
      fit.standardization = e.value("standardization", "none");
      fit.iterations = e.value("iterations", 0);
      if (e.contains("group_variance")) fit.group_variance = read_num(e["group_variance"]);
      if (e.contains("residual_variance")) fit.residual_variance = read_num(e["residual_variance"]);
      if (e.contains("warnings")) fit.warnings = e["warnings"].get<std::vector<std::string>>();
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fit json: ") + e.what(), 0);
  }
}

CompareReport compare_fits(const FitResult& small, const FitResult& big, const std::string& small_name,
                           const std::string& big_name) {
  CompareReport r;
  r.small_name = small_name;
  r.big_name = big_name;
  r.lrt = lrt(small, big);
  r.delta_loglik = big.loglik - small.loglik;
  r.bic_small = bic(small);
  r.bic_big = bic(big);
  r.delta_bic = r.bic_big - r.bic_small;
  r.preferred = r.bic_big < r.bic_small ? big_name : small_name;
  return r;
}

std::string compare_to_json(const CompareReport& r) {
  ojson j;
  j["small"] = r.small_name;
  j["big"] = r.big_name;
  j["delta_loglik"] = num(r.delta_loglik);
  j["chi2"] = num(r.lrt.chi2);
  j["df"] = r.lrt.df;
  j["p"] = num(r.lrt.p);
  j["bic_small"] = num(r.bic_small);
  j["bic_big"] = num(r.bic_big);
  j["delta_bic"] = num(r.delta_bic);
  j["preferred"] = r.preferred;
  return j.dump(2);
}

std::string compare_to_text(const CompareReport& r) {
  std::ostringstream out;
  out << fmt::format("{} vs {}\n", r.small_name, r.big_name);
  out << fmt::format("  delta loglik  {:.4f}\n", r.delta_loglik);
  out << fmt::format("  chi2          {:.4f} (df {}, p {:.4g})\n", r.lrt.chi2, r.lrt.df, r.lrt.p);
  out << fmt::format("  BIC           {:.4f} vs {:.4f} (delta {:+.4f})\n", r.bic_small, r.bic_big, r.delta_bic);
  out << fmt::format("  lower BIC     {}\n", r.preferred);
  return out.str();
}

}  // namespace ctxpred
