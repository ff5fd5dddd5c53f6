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

#ifndef CTXPRED_DESIGN_HPP_
#define CTXPRED_DESIGN_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctxpred/csv.hpp"

namespace ctxpred {

struct DesignOptions {
  // z-score numeric predictors before interactions are formed.
  bool standardize = false;
  // Treatment-coding baseline for categorical predictors, when present.
  std::string reference_level = "function";
};

struct Design {
  std::string formula;
  std::string response;
  std::vector<std::string> columns;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::string standardization = "none";
};

// Builds a design from a column recipe "y ~ t1 + t2 + ...". Terms:
//   1 / 0      intercept on (default) / off; "-1" also drops it
//   x          numeric column, or treatment-coded dummies x[level]
//   a:b        elementwise product of every column of a and b
//   a*b        shorthand for a + b + a:b
Design build_design(const csv::Table& data, const std::string& formula, const DesignOptions& opts = {});

// Dense ids (first-appearance order) for a grouping column.
std::vector<std::size_t> group_ids(const csv::Table& data, const std::string& column);

}  // namespace ctxpred

#endif  // CTXPRED_DESIGN_HPP_
