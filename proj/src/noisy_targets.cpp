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

#include "ctxpred/noisy_targets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace ctxpred {

// --- embeddings ---

void EmbeddingTable::add(const std::string& word, std::vector<double> vec) {
  if (vec.empty()) throw ContractError("embedding for '" + word + "' is empty");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) {
    throw ContractError("embedding for '" + word + "' has dimension " + std::to_string(vec.size()) +
                        ", expected " + std::to_string(dim_));
  }
  for (double x : vec) {
    if (!std::isfinite(x)) throw ContractError("embedding for '" + word + "' has a non-finite entry");
  }
  vectors_[word] = std::move(vec);
}

const std::vector<double>* EmbeddingTable::find(const std::string& word) const {
  auto it = vectors_.find(word);
  return it == vectors_.end() ? nullptr : &it->second;
}

const std::vector<double>& EmbeddingTable::at(const std::string& word) const {
  if (const auto* v = find(word)) return *v;
  throw ContractError("no embedding for '" + word + "'");
}

EmbeddingTable EmbeddingTable::parse(std::istream& in) {
  EmbeddingTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> vec;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        throw ParseError("embeddings: bad number '" + tok + "'", lineno);
      }
    }
    if (lineno == 1 && vec.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "<count> <dim>" header
    }
    try {
      t.add(word, std::move(vec));
    } catch (const ContractError& e) {
      throw ParseError(std::string("embeddings: ") + e.what(), lineno);
    }
  }
  return t;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path.string());
  return parse(in);
}

std::vector<double> noisy_semantic_target(std::span<const double> vec, double noise_var, Rng& rng) {
  if (!(noise_var >= 0.0)) throw ContractError("noise variance must be >= 0");
  std::vector<double> out(vec.begin(), vec.end());
  if (noise_var == 0.0) return out;
  boost::random::normal_distribution<double> eps(0.0, std::sqrt(noise_var));
  for (double& x : out) x += eps(rng);
  return out;
}

std::vector<double> noisy_semantic_target(std::span<const double> vec, double noise_var, std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0);
  return noisy_semantic_target(vec, noise_var, rng);
}

double semantic_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("semantic_distance: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("semantic_distance: zero vector");
  const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return 1.0 - cos;
}

// --- phonetic features ---

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, '\t')) out.push_back(cell);
  return out;
}

std::int8_t parse_feature(const std::string& cell, std::size_t lineno) {
  if (cell == "+") return 1;
  if (cell == "-") return -1;
  if (cell == "0") return 0;
  throw ParseError("phonetic features: value '" + cell + "' not in {+,-,0}", lineno);
}

}  // namespace

PhoneticFeatureTable PhoneticFeatureTable::parse(std::istream& in) {
  PhoneticFeatureTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_tabs(line);
    if (cells.size() != kPhoneticFeatures + 1) {
      throw ParseError("phonetic features: expected " + std::to_string(kPhoneticFeatures + 1) +
                           " columns, got " + std::to_string(cells.size()),
                       lineno);
    }
    if (t.names_.empty()) {
      t.names_.assign(cells.begin() + 1, cells.end());
      continue;
    }
    FeatureVector row{};
    for (std::size_t f = 0; f < kPhoneticFeatures; ++f) row[f] = parse_feature(cells[f + 1], lineno);
    if (!t.rows_.emplace(cells[0], row).second) {
      throw ParseError("phonetic features: duplicate segment '" + cells[0] + "'", lineno);
    }
  }
  if (t.names_.empty()) throw ParseError("phonetic features: missing header", 0);
  return t;
}

PhoneticFeatureTable PhoneticFeatureTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature table " + path.string());
  return parse(in);
}

const FeatureVector& PhoneticFeatureTable::at(const std::string& segment) const {
  auto it = rows_.find(segment);
  if (it == rows_.end()) throw ContractError("unknown segment '" + segment + "'");
  return it->second;
}

FeatureMatrix PhoneticFeatureTable::matrix(const std::vector<std::string>& segments) const {
  FeatureMatrix m;
  m.reserve(segments.size());
  for (const auto& s : segments) m.push_back(at(s));
  return m;
}

// --- lexicon ---

void PronLexicon::add(const std::string& word, std::vector<std::string> segments) {
  if (segments.empty()) throw ContractError("lexicon entry for '" + word + "' has no segments");
  entries_[word] = std::move(segments);
}

const std::vector<std::string>* PronLexicon::find(const std::string& word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

void PronLexicon::check_against(const PhoneticFeatureTable& table) const {
  for (const auto& [word, segs] : entries_) {
    for (const auto& s : segs) {
      if (!table.contains(s)) {
        throw ContractError("lexicon entry '" + word + "' uses segment '" + s + "' missing from the feature table");
      }
    }
  }
}

PronLexicon PronLexicon::parse(std::istream& in) {
  PronLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("lexicon: expected word<TAB>segments", lineno);
    std::istringstream segs(line.substr(tab + 1));
    std::vector<std::string> s{std::istream_iterator<std::string>(segs), std::istream_iterator<std::string>()};
    if (s.empty()) throw ParseError("lexicon: no segments", lineno);
    lex.add(line.substr(0, tab), std::move(s));
  }
  return lex;
}

PronLexicon PronLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon " + path.string());
  return parse(in);
}

FeatureMatrix noisy_phonetic_target(const std::vector<std::string>& segments,
                                    const PhoneticFeatureTable& table, Rng& rng,
                                    std::vector<PhoneticEdit>* edits) {
  if (segments.empty()) throw ContractError("noisy_phonetic_target: empty segment list");
  FeatureMatrix m = table.matrix(segments);
  const std::size_t n = m.size();
  boost::random::uniform_int_distribution<std::size_t> count(1, n);
  boost::random::uniform_int_distribution<std::size_t> position(0, n - 1);
  boost::random::uniform_int_distribution<std::size_t> feature(0, kPhoneticFeatures - 1);
  boost::random::uniform_int_distribution<int> other(0, 1);

  const std::size_t k = count(rng);
  std::vector<std::size_t> positions(k);
  for (auto& p : positions) p = position(rng);
  for (std::size_t p : positions) {
    const std::size_t f = feature(rng);
    const std::int8_t before = m[p][f];
    std::int8_t alternatives[2];
    std::size_t j = 0;
    for (std::int8_t v : {std::int8_t{1}, std::int8_t{-1}, std::int8_t{0}}) {
      if (v != before) alternatives[j++] = v;
    }
    m[p][f] = alternatives[other(rng)];
    if (edits) edits->push_back({p, f, before, m[p][f]});
  }
  return m;
}

FeatureMatrix noisy_phonetic_target(const std::vector<std::string>& segments,
                                    const PhoneticFeatureTable& table, std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0);
  return noisy_phonetic_target(segments, table, rng);
}

double phonetic_distance(const FeatureMatrix& a, const FeatureMatrix& b) {
  auto sub = [](const FeatureVector& x, const FeatureVector& y) {
    std::size_t diff = 0;
    for (std::size_t f = 0; f < kPhoneticFeatures; ++f) diff += x[f] != y[f];
    return static_cast<double>(diff) / static_cast<double>(kPhoneticFeatures);
  };
  std::vector<double> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<double>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<double>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1.0, cur[j - 1] + 1.0, prev[j - 1] + sub(a[i - 1], b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace ctxpred
