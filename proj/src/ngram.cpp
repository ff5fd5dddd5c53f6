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

#include "ctxpred/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ctxpred {

using nlohmann::json;

std::string_view to_string(Direction d) { return d == Direction::Forward ? "forward" : "backward"; }

NGramModel::NGramModel(Vocabulary vocab, const NGramOptions& opts, bool unk_outcome)
    : order_(opts.order),
      alpha_(opts.alpha),
      direction_(opts.direction),
      speaker_tags_(opts.speaker_tags && opts.direction == Direction::Forward),
      vocab_(std::move(vocab)) {
  if (order_ < 1) throw ContractError("n-gram order must be >= 1");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw ContractError("smoothing alpha must be > 0");
  is_outcome_.assign(vocab_.size(), false);
  is_outcome_[Vocabulary::kEosId] = true;
  is_outcome_[Vocabulary::kUnkId] = unk_outcome;
  for (WordId w : vocab_.content_ids()) is_outcome_[w] = true;
  for (WordId w = 0; w < vocab_.size(); ++w) {
    if (is_outcome_[w]) outcomes_.push_back(w);
  }
}

std::vector<WordId> NGramModel::tail(std::span<const WordId> history) const {
  const auto n = static_cast<std::size_t>(order_ - 1);
  std::vector<WordId> ctx(n, kBos);
  const std::size_t take = std::min(n, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

const NGramModel::ContextCounts* NGramModel::lookup(const std::vector<WordId>& ctx) const {
  auto it = counts_.find(ctx);
  return it == counts_.end() ? nullptr : &it->second;
}

std::uint64_t NGramModel::count(std::span<const WordId> history, WordId w) const {
  const auto* c = lookup(tail(history));
  if (!c) return 0;
  auto it = c->next.find(w);
  return it == c->next.end() ? 0 : it->second;
}

std::uint64_t NGramModel::context_total(std::span<const WordId> history) const {
  const auto* c = lookup(tail(history));
  return c ? c->total : 0;
}

double NGramModel::cond_logprob(WordId w, std::span<const WordId> history) const {
  const auto* c = lookup(tail(history));
  double num = alpha_;
  double den = alpha_ * static_cast<double>(outcomes_.size());
  if (c) {
    auto it = c->next.find(w);
    if (it != c->next.end()) num += static_cast<double>(it->second);
    den += static_cast<double>(c->total);
  }
  return std::log(num / den);
}

std::vector<double> NGramModel::distribution(std::span<const WordId> history) const {
  std::vector<double> out;
  out.reserve(outcomes_.size());
  for (WordId w : outcomes_) out.push_back(cond_logprob(w, history));
  return out;
}

namespace {

// Unnormalized log score of `w` in the slot between pre and suf.
double chain_score(const NGramModel& m, WordId w, std::span<const WordId> pre,
                   std::span<const WordId> suf, std::vector<WordId>& buf) {
  const auto keep = static_cast<std::size_t>(m.order() - 1);
  buf.assign(pre.end() - static_cast<std::ptrdiff_t>(std::min(keep, pre.size())), pre.end());
  double s = m.cond_logprob(w, buf);
  buf.push_back(w);
  const std::size_t n = std::min(keep, suf.size());
  for (std::size_t i = 0; i < n; ++i) {
    s += m.cond_logprob(suf[i], buf);
    buf.push_back(suf[i]);
  }
  return s;
}

}  // namespace

std::vector<double> NGramModel::infill_distribution(std::span<const WordId> pre,
                                                    std::span<const WordId> suf) const {
  if (direction_ != Direction::Forward) throw ContractError("infill requires a forward model");
  if (suf.empty()) return distribution(pre);
  std::vector<double> scores;
  scores.reserve(outcomes_.size());
  std::vector<WordId> buf;
  for (WordId w : outcomes_) scores.push_back(chain_score(*this, w, pre, suf, buf));
  const double z = log_sum_exp(scores);
  for (double& s : scores) s -= z;
  return scores;
}

double NGramModel::infill_logprob(WordId w, std::span<const WordId> pre,
                                  std::span<const WordId> suf) const {
  if (direction_ != Direction::Forward) throw ContractError("infill requires a forward model");
  if (suf.empty()) return cond_logprob(w, pre);
  std::vector<double> scores;
  scores.reserve(outcomes_.size());
  std::vector<WordId> buf;
  for (WordId v : outcomes_) scores.push_back(chain_score(*this, v, pre, suf, buf));
  return chain_score(*this, w, pre, suf, buf) - log_sum_exp(scores);
}

std::vector<WordId> NGramModel::utterance_ids(const Utterance& u) const {
  std::vector<WordId> ids;
  ids.reserve(u.tokens.size() + 1);
  if (speaker_tags_) ids.push_back(vocab_.id(speaker_tag(u.speaker)));
  for (const auto& t : u.tokens) ids.push_back(vocab_.id(t));
  return ids;
}

void NGramModel::add_sequence(const std::vector<WordId>& seq) {
  // seq is in reading order, without padding; a leading speaker tag is
  // context only.
  const std::size_t first = speaker_tags_ ? 1 : 0;
  std::vector<WordId> padded(static_cast<std::size_t>(order_ - 1), kBos);
  padded.insert(padded.end(), seq.begin(), seq.end());
  padded.push_back(Vocabulary::kEosId);
  const auto ctx_len = static_cast<std::size_t>(order_ - 1);
  for (std::size_t i = ctx_len + first; i < padded.size(); ++i) {
    std::vector<WordId> ctx(padded.begin() + static_cast<std::ptrdiff_t>(i - ctx_len),
                            padded.begin() + static_cast<std::ptrdiff_t>(i));
    auto& c = counts_[ctx];
    ++c.next[padded[i]];
    ++c.total;
  }
}

NGramModel train_ngram(const Corpus& corpus, const Vocabulary& vocab, const NGramOptions& opts) {
  if (corpus.empty()) throw ContractError("train_ngram: empty corpus");
  bool saw_unk = false;
  for (const auto& u : corpus.utterances) {
    for (const auto& t : u.tokens) saw_unk = saw_unk || !vocab.contains(t);
  }
  NGramModel m(vocab, opts, saw_unk);
  for (const auto& u : corpus.utterances) {
    auto ids = m.utterance_ids(u);
    if (m.direction() == Direction::Backward) std::reverse(ids.begin(), ids.end());
    m.add_sequence(ids);
  }
  return m;
}

double perplexity(const NGramModel& model, const Corpus& corpus) {
  if (corpus.empty()) throw ContractError("perplexity: empty corpus");
  double nll = 0.0;
  std::size_t n = 0;
  for (const auto& u : corpus.utterances) {
    auto ids = model.utterance_ids(u);
    if (model.direction() == Direction::Backward) std::reverse(ids.begin(), ids.end());
    ids.push_back(Vocabulary::kEosId);
    const std::size_t first = model.speaker_tags() ? 1 : 0;
    for (std::size_t i = first; i < ids.size(); ++i) {
      nll -= model.cond_logprob(ids[i], std::span<const WordId>(ids.data(), i));
      ++n;
    }
  }
  return std::exp(nll / static_cast<double>(n));
}

// --- serialization ---

namespace {

constexpr int kFormatVersion = 1;

nlohmann::ordered_json id_json(WordId w) {
  return w == NGramModel::kBos ? nlohmann::ordered_json(-1) : nlohmann::ordered_json(w);
}

WordId id_from_json(const json& j) {
  const auto v = j.get<long long>();
  return v < 0 ? NGramModel::kBos : static_cast<WordId>(v);
}

}  // namespace

void NGramModel::save(std::ostream& out) const {
  nlohmann::ordered_json j;
  j["format"] = "ctxpred-ngram";
  j["version"] = kFormatVersion;
  j["order"] = order_;
  j["alpha"] = alpha_;
  j["direction"] = std::string(to_string(direction_));
  j["speaker_tags"] = speaker_tags_;
  j["unk_outcome"] = is_outcome_[Vocabulary::kUnkId] ? true : false;
  j["min_count"] = vocab_.min_count();
  j["vocab"] = vocab_.tokens();
  auto ctxs = nlohmann::ordered_json::array();
  for (const auto& [ctx, c] : counts_) {
    nlohmann::ordered_json jc;
    auto jctx = nlohmann::ordered_json::array();
    for (WordId w : ctx) jctx.push_back(id_json(w));
    jc["context"] = std::move(jctx);
    jc["total"] = c.total;
    auto next = nlohmann::ordered_json::array();
    for (const auto& [w, n] : c.next) next.push_back({w, n});
    jc["next"] = std::move(next);
    ctxs.push_back(std::move(jc));
  }
  j["contexts"] = std::move(ctxs);
  out << j.dump() << '\n';
}

NGramModel NGramModel::load(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("n-gram model: ") + e.what(), 0);
  }
  try {
    if (j.at("format") != "ctxpred-ngram") throw ParseError("not a ctxpred n-gram model", 0);
    if (j.at("version").get<int>() != kFormatVersion) throw ParseError("unsupported model version", 0);
    NGramOptions opts;
    opts.order = j.at("order").get<int>();
    opts.alpha = j.at("alpha").get<double>();
    opts.direction = j.at("direction") == "backward" ? Direction::Backward : Direction::Forward;
    opts.speaker_tags = j.at("speaker_tags").get<bool>();
    auto vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>(),
                                         j.at("min_count").get<int>());
    NGramModel m(std::move(vocab), opts, j.at("unk_outcome").get<bool>());
    for (const auto& jc : j.at("contexts")) {
      std::vector<WordId> ctx;
      for (const auto& w : jc.at("context")) ctx.push_back(id_from_json(w));
      ContextCounts c;
      c.total = jc.at("total").get<std::uint64_t>();
      std::uint64_t sum = 0;
      for (const auto& e : jc.at("next")) {
        const auto n = e.at(1).get<std::uint64_t>();
        c.next.emplace(e.at(0).get<WordId>(), n);
        sum += n;
      }
      if (sum != c.total) throw ParseError("n-gram model: context total does not match counts", 0);
      m.counts_.emplace(std::move(ctx), std::move(c));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("n-gram model: ") + e.what(), 0);
  }
}

void NGramModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  save(out);
}

NGramModel NGramModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return load(in);
}

std::string NGramModel::fingerprint() const {
  std::ostringstream out;
  save(out);
  return sha256_hex(out.str());
}

}  // namespace ctxpred
