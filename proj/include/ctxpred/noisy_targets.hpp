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

#ifndef CTXPRED_NOISY_TARGETS_HPP_
#define CTXPRED_NOISY_TARGETS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxpred/common.hpp"

namespace ctxpred {

// Word vectors loaded from "word v1 ... v_dim" lines. An optional first line
// holding just "<count> <dim>" (fastText .vec header) is accepted.
class EmbeddingTable {
 public:
  static EmbeddingTable parse(std::istream& in);
  static EmbeddingTable load(const std::filesystem::path& path);

  void add(const std::string& word, std::vector<double> vec);
  const std::vector<double>* find(const std::string& word) const;
  const std::vector<double>& at(const std::string& word) const;
  bool contains(const std::string& word) const { return find(word) != nullptr; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// w + eps, eps_i ~ N(0, noise_var) i.i.d.; the second parameter is a variance.
std::vector<double> noisy_semantic_target(std::span<const double> vec, double noise_var, Rng& rng);
std::vector<double> noisy_semantic_target(std::span<const double> vec, double noise_var, std::uint64_t seed);

// 1 - cos(a, b). Throws on a zero vector or mismatched dims.
double semantic_distance(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kPhoneticFeatures = 22;

// Ternary feature value: '+' -> +1, '-' -> -1, '0' -> 0.
using FeatureVector = std::array<std::int8_t, kPhoneticFeatures>;
using FeatureMatrix = std::vector<FeatureVector>;

class PhoneticFeatureTable {
 public:
  // TSV with header "segment f1 ... f22"; cells in {+,-,0}.
  static PhoneticFeatureTable parse(std::istream& in);
  static PhoneticFeatureTable load(const std::filesystem::path& path);

  const FeatureVector& at(const std::string& segment) const;
  bool contains(const std::string& segment) const { return rows_.count(segment) > 0; }
  const std::vector<std::string>& feature_names() const { return names_; }
  std::size_t size() const { return rows_.size(); }

  FeatureMatrix matrix(const std::vector<std::string>& segments) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, FeatureVector> rows_;
};

// word -> IPA segments, TSV "word<TAB>seg seg seg".
class PronLexicon {
 public:
  static PronLexicon parse(std::istream& in);
  static PronLexicon load(const std::filesystem::path& path);

  void add(const std::string& word, std::vector<std::string> segments);
  const std::vector<std::string>* find(const std::string& word) const;
  bool contains(const std::string& word) const { return find(word) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  // Throws naming the first segment missing from the table.
  void check_against(const PhoneticFeatureTable& table) const;

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

struct PhoneticEdit {
  std::size_t position;  // 0-based segment index
  std::size_t feature;   // 0-based feature index
  std::int8_t before;
  std::int8_t after;
};

// Perturbs the target's feature matrix: k ~ U{1..N} segment positions drawn
// i.i.d. U{1..N} (with replacement); at each, one of the 22 features is
// redrawn uniformly from the two values it does not currently hold.
FeatureMatrix noisy_phonetic_target(const std::vector<std::string>& segments,
                                    const PhoneticFeatureTable& table, Rng& rng,
                                    std::vector<PhoneticEdit>* edits = nullptr);
FeatureMatrix noisy_phonetic_target(const std::vector<std::string>& segments,
                                    const PhoneticFeatureTable& table, std::uint64_t seed);

// Edit distance with substitution cost (#differing features)/22 and
// insertion/deletion cost 1.
double phonetic_distance(const FeatureMatrix& a, const FeatureMatrix& b);

}  // namespace ctxpred

#endif  // CTXPRED_NOISY_TARGETS_HPP_
