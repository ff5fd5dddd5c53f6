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

#ifndef CTXPRED_COMMON_HPP_
#define CTXPRED_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/random/mersenne_twister.hpp>

namespace ctxpred {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Violated precondition of an operation.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Configuration value at `path` (JSONPath-like, "$.ngram.order") is invalid.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

using WordId = std::uint32_t;

// Portable generator: boost distributions give identical streams on every
// platform, which the golden files depend on.
using Rng = boost::random::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent generator for item `stream` under a run-level seed.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

// log(sum(exp(xs))), -inf for an empty or all -inf input.
double log_sum_exp(const std::vector<double>& xs);

// Shortest text form that parses back to the same double.
std::string format_double(double v);

// Runs body(i) for i in [0, n) on up to `jobs` threads. Exceptions from the
// body are rethrown on the caller's thread (the first one wins).
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& body);

}  // namespace ctxpred

#endif  // CTXPRED_COMMON_HPP_
