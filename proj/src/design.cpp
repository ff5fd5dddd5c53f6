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

#include "ctxpred/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include <boost/algorithm/string.hpp>

#include "ctxpred/common.hpp"

namespace ctxpred {

namespace {

struct Block {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> cols;
};

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
}

class Frame {
 public:
  Frame(const csv::Table& data, const DesignOptions& opts) : data_(data), opts_(opts) {}

  const Block& variable(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    if (!data_.has_column(name)) throw ContractError("formula refers to unknown column '" + name + "'");
    const auto c = data_.column(name);
    const auto n = static_cast<Eigen::Index>(data_.rows.size());
    Block b;

    Eigen::VectorXd v(n);
    bool numeric = true;
    for (Eigen::Index i = 0; i < n && numeric; ++i) {
      const auto x = to_number(data_.rows[static_cast<std::size_t>(i)][c]);
      if (x) v[i] = *x;
      else numeric = false;
    }
    if (numeric) {
      if (opts_.standardize && n > 1) {
        const double mean = v.mean();
        const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
        if (sd > 0) v = (v.array() - mean) / sd;
      }
      b.names.push_back(name);
      b.cols.push_back(std::move(v));
    } else {
      std::set<std::string> levels;
      for (const auto& row : data_.rows) levels.insert(row[c]);
      const std::string ref = levels.count(opts_.reference_level) ? opts_.reference_level : *levels.begin();
      for (const auto& level : levels) {
        if (level == ref) continue;
        Eigen::VectorXd d(n);
        for (Eigen::Index i = 0; i < n; ++i) d[i] = data_.rows[static_cast<std::size_t>(i)][c] == level ? 1.0 : 0.0;
        b.names.push_back(name + "[" + level + "]");
        b.cols.push_back(std::move(d));
      }
    }
    return cache_.emplace(name, std::move(b)).first->second;
  }

  Eigen::VectorXd numeric(const std::string& name) {
    const auto c = data_.column(name);
    Eigen::VectorXd v(static_cast<Eigen::Index>(data_.rows.size()));
    for (std::size_t i = 0; i < data_.rows.size(); ++i) {
      const auto x = to_number(data_.rows[i][c]);
      if (!x) throw ContractError("response column '" + name + "' has non-numeric value '" + data_.rows[i][c] + "'");
      v[static_cast<Eigen::Index>(i)] = *x;
    }
    return v;
  }

 private:
  const csv::Table& data_;
  const DesignOptions& opts_;
  std::map<std::string, Block> cache_;
};

Block product(const Block& a, const Block& b) {
  Block out;
  for (std::size_t i = 0; i < a.cols.size(); ++i) {
    for (std::size_t j = 0; j < b.cols.size(); ++j) {
      out.names.push_back(a.names[i] + ":" + b.names[j]);
      out.cols.push_back(a.cols[i].cwiseProduct(b.cols[j]));
    }
  }
  return out;
}

std::vector<std::string> split_trim(const std::string& s, const char* sep) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(sep));
  for (auto& p : parts) boost::trim(p);
  return parts;
}

}  // namespace

Design build_design(const csv::Table& data, const std::string& formula, const DesignOptions& opts) {
  const auto tilde = formula.find('~');
  if (tilde == std::string::npos) throw ContractError("formula '" + formula + "' has no '~'");
  Design d;
  d.formula = formula;
  d.response = boost::trim_copy(formula.substr(0, tilde));
  if (d.response.empty()) throw ContractError("formula '" + formula + "' has no response");
  d.standardization = opts.standardize ? "zscore" : "none";

  std::string rhs = formula.substr(tilde + 1);
  boost::replace_all(rhs, "-1", "+0");
  boost::replace_all(rhs, "- 1", "+ 0");

  // Expand a*b into its main effects and interaction, keeping first-seen order.
  std::vector<std::string> terms;
  auto add_term = [&](const std::string& t) {
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
  };
  bool intercept = true;
  for (const auto& term : split_trim(rhs, "+")) {
    if (term.empty()) throw ContractError("formula '" + formula + "' has an empty term");
    if (term == "0") {
      intercept = false;
      continue;
    }
    if (term == "1") continue;
    if (term.find('*') != std::string::npos) {
      const auto factors = split_trim(term, "*");
      for (const auto& f : factors) add_term(f);
      add_term(boost::join(factors, ":"));
    } else {
      add_term(term);
    }
  }

  Frame frame(data, opts);
  const auto n = static_cast<Eigen::Index>(data.rows.size());
  std::vector<Eigen::VectorXd> cols;
  if (intercept) {
    d.columns.push_back("(Intercept)");
    cols.push_back(Eigen::VectorXd::Ones(n));
  }
  for (const auto& term : terms) {
    const auto factors = split_trim(term, ":");
    Block b = frame.variable(factors[0]);
    for (std::size_t k = 1; k < factors.size(); ++k) b = product(b, frame.variable(factors[k]));
    for (std::size_t k = 0; k < b.cols.size(); ++k) {
      if (std::find(d.columns.begin(), d.columns.end(), b.names[k]) != d.columns.end()) continue;
      d.columns.push_back(b.names[k]);
      cols.push_back(std::move(b.cols[k]));
    }
  }

  d.X.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) d.X.col(static_cast<Eigen::Index>(j)) = cols[j];
  d.y = frame.numeric(d.response);
  return d;
}

std::vector<std::size_t> group_ids(const csv::Table& data, const std::string& column) {
  const auto c = data.column(column);
  std::map<std::string, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(data.rows.size());
  for (const auto& row : data.rows) out.push_back(ids.emplace(row[c], ids.size()).first->second);
  return out;
}

}  // namespace ctxpred
