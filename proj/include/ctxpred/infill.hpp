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

#ifndef CTXPRED_INFILL_HPP_
#define CTXPRED_INFILL_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxpred/corpus.hpp"

namespace ctxpred {

// One infill training sequence built from a source utterance:
//   <PRE> w_1 .. w_{k-1} <SUF> w_{k+1} .. w_N <MID> w_k <eos>
// or, when swapped, with the <SUF> block ahead of the <PRE> block.
struct AugmentedRecord {
  std::size_t source_index = 0;  // utterance index in the corpus
  std::size_t k = 0;             // 1-based position of the moved word
  bool swapped = false;
  std::vector<std::string> sequence;

  std::string line() const;  // space-joined sequence
};

struct AugmentOptions {
  double swap_prob = 0.5;
  // Speaker tag at the head of the prefix block.
  bool speaker_tags = false;
  // Records drawn per utterance, each from its own stream.
  std::size_t samples_per_utterance = 1;
};

struct AugmentReport {
  std::size_t skipped_empty = 0;
};

// Deterministic given (corpus, seed, options). Utterance i (sample s) draws
// from stream_rng(seed, i * samples + s), so records do not depend on
// processing order.
std::vector<AugmentedRecord> augment_corpus(const Corpus& corpus, std::uint64_t seed,
                                            const AugmentOptions& opts = {},
                                            AugmentReport* report = nullptr);

// Builds one record for a fixed position and block order.
AugmentedRecord augment_utterance(const Utterance& u, std::size_t k, bool swapped,
                                  bool speaker_tags = false);

// "<PRE> pre <SUF> suf <MID>", suffix block first when swapped. The scored
// word follows <MID>.
std::vector<std::string> make_infill_query(const std::vector<std::string>& pre,
                                           const std::vector<std::string>& suf, bool swapped);

void write_augmented(std::ostream& out, const std::vector<AugmentedRecord>& records);

}  // namespace ctxpred

#endif  // CTXPRED_INFILL_HPP_
