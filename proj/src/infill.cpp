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

#include "ctxpred/infill.hpp"

#include <ostream>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace ctxpred {

std::string AugmentedRecord::line() const {
  std::string out;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (i) out += ' ';
    out += sequence[i];
  }
  return out;
}

std::vector<std::string> make_infill_query(const std::vector<std::string>& pre,
                                           const std::vector<std::string>& suf, bool swapped) {
  std::vector<std::string> q;
  q.reserve(pre.size() + suf.size() + 3);
  auto prefix = [&] {
    q.emplace_back(Vocabulary::kPre);
    q.insert(q.end(), pre.begin(), pre.end());
  };
  auto suffix = [&] {
    q.emplace_back(Vocabulary::kSuf);
    q.insert(q.end(), suf.begin(), suf.end());
  };
  if (swapped) {
    suffix();
    prefix();
  } else {
    prefix();
    suffix();
  }
  q.emplace_back(Vocabulary::kMid);
  return q;
}

AugmentedRecord augment_utterance(const Utterance& u, std::size_t k, bool swapped, bool speaker_tags) {
  const std::size_t n = u.tokens.size();
  if (k < 1 || k > n) throw ContractError("augment: position out of range");
  std::vector<std::string> pre;
  if (speaker_tags) pre.push_back(speaker_tag(u.speaker));
  pre.insert(pre.end(), u.tokens.begin(), u.tokens.begin() + static_cast<std::ptrdiff_t>(k - 1));
  std::vector<std::string> suf(u.tokens.begin() + static_cast<std::ptrdiff_t>(k), u.tokens.end());
  AugmentedRecord r;
  r.k = k;
  r.swapped = swapped;
  r.sequence = make_infill_query(pre, suf, swapped);
  r.sequence.push_back(u.tokens[k - 1]);
  r.sequence.emplace_back(Vocabulary::kEos);
  return r;
}

std::vector<AugmentedRecord> augment_corpus(const Corpus& corpus, std::uint64_t seed,
                                            const AugmentOptions& opts, AugmentReport* report) {
  if (!(opts.swap_prob >= 0.0 && opts.swap_prob <= 1.0)) {
    throw ContractError("swap_prob must lie in [0, 1]");
  }
  if (opts.samples_per_utterance == 0) throw ContractError("samples_per_utterance must be >= 1");
  std::vector<AugmentedRecord> out;
  out.reserve(corpus.size() * opts.samples_per_utterance);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus.utterances[i];
    if (u.tokens.empty()) {
      if (report) ++report->skipped_empty;
      continue;
    }
    for (std::size_t s = 0; s < opts.samples_per_utterance; ++s) {
      Rng rng = stream_rng(seed, i * opts.samples_per_utterance + s);
      boost::random::uniform_int_distribution<std::size_t> pick(1, u.tokens.size());
      boost::random::bernoulli_distribution<double> swap(opts.swap_prob);
      const std::size_t k = pick(rng);
      const bool swapped = swap(rng);
      auto rec = augment_utterance(u, k, swapped, opts.speaker_tags);
      rec.source_index = i;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

void write_augmented(std::ostream& out, const std::vector<AugmentedRecord>& records) {
  for (const auto& r : records) out << r.line() << '\n';
}

}  // namespace ctxpred
