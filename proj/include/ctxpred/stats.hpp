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

#ifndef CTXPRED_STATS_HPP_
#define CTXPRED_STATS_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctxpred/common.hpp"

namespace ctxpred {

// Design columns are linearly dependent. columns() names the ones that can
// be written as combinations of the others.
class RankDeficient : public ContractError {
 public:
  RankDeficient(const std::string& what, std::vector<std::string> columns)
      : ContractError(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

// The logistic likelihood has no finite maximizer.
class Separation : public Error {
 public:
  using Error::Error;
};

enum class ModelKind { Ols, LmmRandomIntercept, Logistic };
std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

struct FitResult {
  ModelKind model_kind = ModelKind::Ols;
  std::vector<std::string> columns;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;
  double loglik = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_params = 0;
  bool converged = false;
  std::optional<double> group_variance;
  std::optional<double> residual_variance;
  int iterations = 0;
  std::string standardization = "none";
  std::string formula;
  std::vector<std::string> warnings;
  Eigen::VectorXd fitted;  // X * beta (linear predictor for logistic)

  double coef(const std::string& name) const;
  double std_error(const std::string& name) const;
  std::size_t index(const std::string& name) const;
};

// Throws RankDeficient when X does not have full column rank.
void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& columns);

// Least squares. loglik is the Gaussian log-likelihood at the MLE (sigma^2 =
// RSS/n); standard errors use RSS/(n-p). n_params = p + 1.
FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& columns);

// y = X beta + b_group + e, b ~ N(0, tau^2), e ~ N(0, sigma^2), fit by
// maximum likelihood. Fixed effects and sigma^2 are profiled out; the ratio
// tau^2/sigma^2 is found by a bounded Brent search on its log. A single group
// falls back to OLS with a warning. n_params = p + 2.
FitResult fit_lmm_random_intercept(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const std::vector<std::size_t>& groups,
                                   const std::vector<std::string>& columns);

struct LogisticOptions {
  int max_iter = 100;
  double score_tol = 1e-8;
  double rel_tol = 1e-10;
  // Warm start; zeros when absent.
  std::optional<Eigen::VectorXd> start;
};

// IRLS (Newton) for the logit link. Throws Separation when the likelihood is
// maximized at infinity and RankDeficient for a singular design.
FitResult fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& columns,
                       const LogisticOptions& opts = {});

struct LrtResult {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
};

// chi2 = 2 * delta_loglik, upper-tail p-value.
LrtResult lrt_statistic(double delta_loglik, int df);
LrtResult lrt(const FitResult& small, const FitResult& big);

// k ln n - 2 loglik.
double bic(const FitResult& fit);

using Fitter = std::function<FitResult(const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

struct BootstrapOptions {
  std::size_t n_sims = 1000;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::size_t jobs = 1;
  // Resample whole clusters (one id per row) instead of rows.
  std::optional<std::vector<std::size_t>> clusters;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

struct BootstrapResult {
  std::vector<Interval> intervals;  // one per design column
  std::size_t successes = 0;
  std::vector<std::string> failures;
  bool coverage_warning = false;  // fewer than 95% of resamples succeeded
};

// Percentile intervals from case (or cluster) resampling.
BootstrapResult bootstrap_ci(const Fitter& fitter, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const BootstrapOptions& opts = {});

// Sample quantile with linear interpolation between order statistics.
double quantile(std::vector<double> xs, double q);

// Fit JSON: {model_kind, formula_columns, coefficients, std_errors, loglik,
// n_obs, n_params, converged, extras}.
std::string fit_to_json(const FitResult& fit, int indent = 2);
FitResult fit_from_json(const std::string& text);

struct CompareReport {
  std::string small_name, big_name;
  double delta_loglik = 0.0;
  LrtResult lrt;
  double bic_small = 0.0, bic_big = 0.0;
  double delta_bic = 0.0;  // bic(big) - bic(small)
  std::string preferred;  // lower BIC
};

CompareReport compare_fits(const FitResult& small, const FitResult& big, const std::string& small_name = "small",
                           const std::string& big_name = "big");
std::string compare_to_json(const CompareReport& r);
std::string compare_to_text(const CompareReport& r);

}  // namespace ctxpred

#endif  // CTXPRED_STATS_HPP_
