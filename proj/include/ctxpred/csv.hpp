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

#ifndef CTXPRED_CSV_HPP_
#define CTXPRED_CSV_HPP_

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ctxpred::csv {

// RFC 4180 quoting: fields with a comma, quote or newline are quoted.
std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws if absent
  bool has_column(const std::string& name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

}  // namespace ctxpred::csv

#endif  // CTXPRED_CSV_HPP_
