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

#ifndef CTXPRED_CORPUS_HPP_
#define CTXPRED_CORPUS_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctxpred/common.hpp"

namespace ctxpred {

enum class Speaker { A, B };

enum class DisfluencyKind { Reparandum, Repair, Filler, Repetition };

std::string_view to_string(Speaker s);
std::string_view to_string(DisfluencyKind k);
DisfluencyKind parse_disfluency_kind(std::string_view s);

// Token span [start, end) of an utterance. A repair points at the index of
// the reparandum region it corrects.
struct DisfluencyRegion {
  DisfluencyKind kind = DisfluencyKind::Filler;
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::size_t> repair_of;
  // Error-category annotation carried on repair regions
  // (semantic | phonological | mixed | morphosyntactic).
  std::optional<std::string> category;

  bool operator==(const DisfluencyRegion&) const = default;
};

struct Utterance {
  std::string conversation_id;
  Speaker speaker = Speaker::A;
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> pos;
  std::vector<DisfluencyRegion> disfluencies;

  // Throws ContractError when the invariants on pos alignment and regions do
  // not hold.
  void validate() const;

  bool operator==(const Utterance&) const = default;
};

struct Corpus {
  std::vector<Utterance> utterances;

  bool empty() const { return utterances.empty(); }
  std::size_t size() const { return utterances.size(); }
  std::size_t token_count() const;
};

struct LoadOptions {
  bool strict = true;
  bool lowercase = true;
};

struct LoadReport {
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

Corpus parse_corpus(std::istream& in, const LoadOptions& opts = {}, LoadReport* report = nullptr);
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {},
                   LoadReport* report = nullptr);

// Canonical single-line JSON form of an utterance (no trailing newline).
std::string to_jsonl(const Utterance& u);
void write_corpus(std::ostream& out, const Corpus& corpus);

// Speaker tag token used when tags are materialized in token streams.
std::string speaker_tag(Speaker s);

// Word <-> id map. Ids are dense from 0; the five reserved tokens come
// first, then optional speaker tags, then words by descending frequency
// with ties broken lexicographically.
class Vocabulary {
 public:
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kPre = "<PRE>";
  static constexpr std::string_view kSuf = "<SUF>";
  static constexpr std::string_view kMid = "<MID>";

  static constexpr WordId kEosId = 0;
  static constexpr WordId kUnkId = 1;
  static constexpr WordId kPreId = 2;
  static constexpr WordId kSufId = 3;
  static constexpr WordId kMidId = 4;

  Vocabulary();

  // Rebuilds a vocabulary from its exported token list. The list must start
  // with the reserved tokens in id order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, int min_count = 1);

  WordId id(std::string_view word) const;  // <unk> for unknown words
  std::optional<WordId> find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }
  const std::string& word(WordId id) const;
  std::size_t size() const { return words_.size(); }
  int min_count() const { return min_count_; }

  // Reserved tokens and speaker tags.
  bool is_special(WordId id) const { return id < n_special_; }
  std::size_t special_count() const { return n_special_; }
  std::vector<WordId> content_ids() const;
  const std::vector<std::string>& tokens() const { return words_; }

  std::vector<WordId> map(const std::vector<std::string>& words) const;

  void write(std::ostream& out) const;  // one token per line, id order
  static Vocabulary read(std::istream& in);

  bool operator==(const Vocabulary& o) const { return words_ == o.words_ && n_special_ == o.n_special_; }

 private:
  void add(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
  std::size_t n_special_ = 0;
  int min_count_ = 1;
};

Vocabulary build_vocab(const Corpus& corpus, int min_count, bool speaker_tags = false);

}  // namespace ctxpred

#endif  // CTXPRED_CORPUS_HPP_
