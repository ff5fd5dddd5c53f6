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

#ifndef CTXPRED_NGRAM_HPP_
#define CTXPRED_NGRAM_HPP_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxpred/corpus.hpp"

namespace ctxpred {

enum class Direction { Forward, Backward };

std::string_view to_string(Direction d);

struct NGramOptions {
  int order = 2;
  double alpha = 1.0;
  Direction direction = Direction::Forward;
  // Materialize the speaker tag as unpredicted left context.
  bool speaker_tags = false;
};

// Count-based n-gram model with add-alpha (Laplace) smoothing:
//
//   p(w | h) = (c(h, w) + alpha) / (c(h) + alpha * V)
//
// where h is the last order-1 tokens of the history and V the number of
// predictable outcomes. Sequences are left-padded with order-1 boundary
// tokens that are never predicted and terminated with a predicted <eos>.
// A backward model is the same estimator trained on reversed utterances, so
// its history for w_t is w_N ... w_{t+1}.
//
// The outcome set is every content word plus <eos>; <unk> is an outcome only
// if the training data contained out-of-vocabulary tokens. The infill
// markers and speaker tags are never outcomes.
class NGramModel {
 public:
  // Left padding; not a vocabulary id.
  static constexpr WordId kBos = std::numeric_limits<WordId>::max();

  struct ContextCounts {
    std::map<WordId, std::uint64_t> next;
    std::uint64_t total = 0;
  };

  // A model with no counts: every conditional is uniform over the outcomes.
  NGramModel(Vocabulary vocab, const NGramOptions& opts, bool unk_outcome = false);

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  Direction direction() const { return direction_; }
  bool speaker_tags() const { return speaker_tags_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<WordId>& outcomes() const { return outcomes_; }
  bool is_outcome(WordId w) const { return w < is_outcome_.size() && is_outcome_[w]; }
  std::size_t outcome_count() const { return outcomes_.size(); }
  const std::map<std::vector<WordId>, ContextCounts>& counts() const { return counts_; }

  // Count of (context tail, word) and of the context tail alone.
  std::uint64_t count(std::span<const WordId> history, WordId w) const;
  std::uint64_t context_total(std::span<const WordId> history) const;

  // Natural-log conditional probability of w after `history`, given in the
  // model's reading order (reversed future for a backward model). Histories
  // shorter than order-1 are left-padded with kBos. Words outside the outcome
  // set receive the smoothed mass of an unseen outcome.
  double cond_logprob(WordId w, std::span<const WordId> history) const;

  // Normalized log-distribution over outcomes() after `history`.
  std::vector<double> distribution(std::span<const WordId> history) const;

  // Bidirectional probability p(w | pre, suf) by enumeration over outcomes:
  // p(w | pre, suf) is proportional to p(w | pre) * prod_i p(suf_i | pre w suf_<i).
  // Only the first order-1 suffix tokens depend on w; later factors cancel.
  // Requires a forward model.
  double infill_logprob(WordId w, std::span<const WordId> pre, std::span<const WordId> suf) const;
  std::vector<double> infill_distribution(std::span<const WordId> pre,
                                          std::span<const WordId> suf) const;

  // Token ids of an utterance as the model sees them (speaker tag first when
  // enabled), in forward order and without padding or <eos>.
  std::vector<WordId> utterance_ids(const Utterance& u) const;

  // Serialization: versioned JSON (see README for the schema).
  void save(std::ostream& out) const;
  static NGramModel load(std::istream& in);
  void save_file(const std::string& path) const;
  static NGramModel load_file(const std::string& path);
  // SHA-256 of the serialized form.
  std::string fingerprint() const;

 private:
  friend NGramModel train_ngram(const Corpus&, const Vocabulary&, const NGramOptions&);

  void add_sequence(const std::vector<WordId>& seq);
  std::vector<WordId> tail(std::span<const WordId> history) const;
  const ContextCounts* lookup(const std::vector<WordId>& ctx) const;

  int order_;
  double alpha_;
  Direction direction_;
  bool speaker_tags_;
  Vocabulary vocab_;
  std::vector<WordId> outcomes_;
  std::vector<bool> is_outcome_;
  std::map<std::vector<WordId>, ContextCounts> counts_;
};

NGramModel train_ngram(const Corpus& corpus, const Vocabulary& vocab, const NGramOptions& opts);

// exp(mean negative log-probability per predicted token, <eos> included).
double perplexity(const NGramModel& model, const Corpus& corpus);

}  // namespace ctxpred

#endif  // CTXPRED_NGRAM_HPP_
