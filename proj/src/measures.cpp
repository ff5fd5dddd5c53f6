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

#include "ctxpred/measures.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ctxpred/csv.hpp"

namespace ctxpred {

MeasureSet compute_measures(double logp_unigram, double logp_forward, double logp_backward,
                            double logp_bidirectional) {
  MeasureSet m;
  m.unigram = logp_unigram;
  m.forward = logp_forward;
  m.backward = logp_backward;
  m.bidirectional = logp_bidirectional;
  m.uncond_pmi = logp_backward - logp_unigram;
  m.cond_pmi = logp_bidirectional - logp_forward;
  m.rel_backward = logp_backward - logp_forward;
  return m;
}

MeasureSet compute_measures(const PredictabilityRecord& rec) {
  for (double v : {rec.logp_unigram, rec.logp_forward, rec.logp_backward, rec.logp_bidirectional}) {
    if (!std::isfinite(v)) {
      throw ContractError("non-finite log-probability in record (utterance " + std::to_string(rec.utt_index) +
                          ", t=" + std::to_string(rec.t) + ", word '" + rec.word + "')");
    }
  }
  return compute_measures(rec.logp_unigram, rec.logp_forward, rec.logp_backward, rec.logp_bidirectional);
}

double SymmetryCheck::discrepancy() const { return std::abs(lhs - rhs); }

double continuation_logprob(const NGramModel& model, std::span<const WordId> history,
                            std::span<const WordId> suffix) {
  std::vector<WordId> buf(history.begin(), history.end());
  double lp = 0.0;
  for (WordId w : suffix) {
    lp += model.cond_logprob(w, buf);
    buf.push_back(w);
  }
  return lp;
}

SymmetryCheck pmi_symmetry_check(const NGramModel& model, std::span<const WordId> ids, std::size_t t) {
  if (t >= ids.size()) throw ContractError("pmi_symmetry_check: position out of range");
  const auto pre = ids.subspan(0, t);
  const auto suf = ids.subspan(t + 1);
  const WordId w = ids[t];

  SymmetryCheck c;
  c.lhs = model.infill_logprob(w, pre, suf) - model.cond_logprob(w, pre);

  std::vector<WordId> hist(pre.begin(), pre.end());
  hist.push_back(w);
  const double future_given_word = continuation_logprob(model, hist, suf);
  std::vector<double> joint;
  joint.reserve(model.outcome_count());
  for (WordId v : model.outcomes()) {
    hist.back() = v;
    joint.push_back(model.cond_logprob(v, pre) + continuation_logprob(model, hist, suf));
  }
  c.rhs = future_given_word - log_sum_exp(joint);
  return c;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ContractError("pearson: series lengths differ");
  if (xs.size() < 2) throw ContractError("pearson: need at least two observations");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ContractError("undefined correlation: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

const std::vector<std::string> kScoreColumns = {
    "conversation_id", "utt_index",    "t",        "word",     "logp_unigram", "logp_forward",
    "logp_backward",   "logp_bidirectional", "uncond_pmi", "cond_pmi", "rel_backward"};

}  // namespace

void write_scores_csv(std::ostream& out, const std::vector<PredictabilityRecord>& records) {
  csv::write_row(out, kScoreColumns);
  for (const auto& r : records) {
    const auto m = compute_measures(r);
    csv::write_row(out, {r.conversation_id, std::to_string(r.utt_index), std::to_string(r.t), r.word,
                         format_double(m.unigram), format_double(m.forward), format_double(m.backward),
                         format_double(m.bidirectional), format_double(m.uncond_pmi),
                         format_double(m.cond_pmi), format_double(m.rel_backward)});
  }
}

std::vector<PredictabilityRecord> read_records_csv(std::istream& in) {
  const auto table = csv::read(in);
  const auto c_conv = table.column("conversation_id"), c_utt = table.column("utt_index"),
             c_t = table.column("t"), c_word = table.column("word"),
             c_uni = table.column("logp_unigram"), c_fwd = table.column("logp_forward"),
             c_bwd = table.column("logp_backward"), c_bi = table.column("logp_bidirectional");
  std::vector<PredictabilityRecord> out;
  out.reserve(table.rows.size());
  std::size_t line = 1;
  for (const auto& row : table.rows) {
    ++line;
    try {
      PredictabilityRecord r;
      r.conversation_id = row[c_conv];
      r.utt_index = std::stoull(row[c_utt]);
      r.t = std::stoull(row[c_t]);
      r.word = row[c_word];
      r.logp_unigram = std::stod(row[c_uni]);
      r.logp_forward = std::stod(row[c_fwd]);
      r.logp_backward = std::stod(row[c_bwd]);
      r.logp_bidirectional = std::stod(row[c_bi]);
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(std::string("records csv: bad number: ") + e.what(), line);
    }
  }
  return out;
}

}  // namespace ctxpred
