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

#ifndef CTXPRED_MEASURES_HPP_
#define CTXPRED_MEASURES_HPP_

#include <iosfwd>
#include <span>
#include <vector>

#include "ctxpred/gateway.hpp"
#include "ctxpred/ngram.hpp"

namespace ctxpred {

// Contextual predictability of one token, in nats.
//
//   uncond_pmi   = log p(w|C>t) - log p(w)
//   cond_pmi     = log p(w|C>t, C<t) - log p(w|C<t)
//   rel_backward = log p(w|C>t) - log p(w|C<t)
struct MeasureSet {
  double forward = 0.0;
  double backward = 0.0;
  double unigram = 0.0;
  double bidirectional = 0.0;
  double uncond_pmi = 0.0;
  double cond_pmi = 0.0;
  double rel_backward = 0.0;
};

MeasureSet compute_measures(double logp_unigram, double logp_forward, double logp_backward,
                            double logp_bidirectional);
// Throws ContractError naming the record when a log-probability is not finite.
MeasureSet compute_measures(const PredictabilityRecord& rec);

struct SymmetryCheck {
  double lhs = 0.0;  // infill minus forward log-probability
  double rhs = 0.0;  // log p(C>t | w, C<t) - log p(C>t | C<t)
  double discrepancy() const;
};

// Evaluates conditional PMI at position t of `ids` twice: from the
// normalized infill probability, and through Bayes' rule from full
// sequence-continuation probabilities, with
//   p(C>t | C<t) = sum_w p(w | C<t) p(C>t | w, C<t).
// `ids` are model token ids in forward order.
SymmetryCheck pmi_symmetry_check(const NGramModel& model, std::span<const WordId> ids, std::size_t t);

// log p(suffix | history) under a forward model, chaining every suffix token.
double continuation_logprob(const NGramModel& model, std::span<const WordId> history,
                            std::span<const WordId> suffix);

// Sample Pearson correlation. Throws on unequal or too-short input and on a
// constant series ("undefined correlation").
double pearson(std::span<const double> xs, std::span<const double> ys);

// Scores CSV: one row per token.
void write_scores_csv(std::ostream& out, const std::vector<PredictabilityRecord>& records);
std::vector<PredictabilityRecord> read_records_csv(std::istream& in);

}  // namespace ctxpred

#endif  // CTXPRED_MEASURES_HPP_
