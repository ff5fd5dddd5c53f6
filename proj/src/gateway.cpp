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

#include "ctxpred/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace ctxpred {

using nlohmann::json;

// --- NgramBackend ---

NgramBackend::NgramBackend(std::shared_ptr<const NGramModel> forward,
                           std::shared_ptr<const NGramModel> backward)
    : forward_(std::move(forward)), backward_(std::move(backward)) {
  if (!forward_ || forward_->direction() != Direction::Forward) {
    throw ContractError("NgramBackend needs a forward model");
  }
  if (backward_) {
    if (backward_->direction() != Direction::Backward) {
      throw ContractError("NgramBackend backward model has direction=forward");
    }
    if (!(backward_->vocab() == forward_->vocab())) {
      throw ContractError("forward and backward models use different vocabularies");
    }
  }
  for (WordId w : forward_->outcomes()) space_.push_back(forward_->vocab().word(w));
  std::string fp = forward_->fingerprint();
  if (backward_) fp += backward_->fingerprint();
  id_ = "ngram:" + sha256_hex(fp).substr(0, 16);
}

std::vector<double> NgramBackend::score(const ScoreRequest& req) {
  const auto& v = forward_->vocab();
  const auto pre = v.map(req.pre);
  const auto suf = v.map(req.suf);
  std::vector<double> out;
  out.reserve(req.candidates.size());
  switch (req.mode) {
    case ScoreMode::Forward:
      for (const auto& c : req.candidates) out.push_back(forward_->cond_logprob(v.id(c), pre));
      break;
    case ScoreMode::Backward: {
      if (!backward_) throw ProtocolError("backend has no backward model");
      std::vector<WordId> hist(suf.rbegin(), suf.rend());
      for (const auto& c : req.candidates) out.push_back(backward_->cond_logprob(v.id(c), hist));
      break;
    }
    case ScoreMode::Infill: {
      const auto dist = forward_->infill_distribution(pre, suf);
      const auto& outs = forward_->outcomes();
      for (const auto& c : req.candidates) {
        const WordId w = v.id(c);
        auto it = std::lower_bound(outs.begin(), outs.end(), w);
        if (it != outs.end() && *it == w) {
          out.push_back(dist[static_cast<std::size_t>(it - outs.begin())]);
        } else {
          out.push_back(forward_->infill_logprob(w, pre, suf));
        }
      }
      break;
    }
  }
  return out;
}

// --- Scores ---

double Scores::at(const std::string& word) const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] == word) return logprobs[i];
  }
  throw ContractError("no score for candidate '" + word + "'");
}

// --- Gateway ---

namespace {

std::string_view mode_name(ScoreMode m) {
  switch (m) {
    case ScoreMode::Forward: return "forward";
    case ScoreMode::Backward: return "backward";
    case ScoreMode::Infill: return "infill";
  }
  return "forward";
}

std::vector<double> renormalize(std::vector<double> lp) {
  const double z = log_sum_exp(lp);
  for (double& x : lp) x -= z;
  return lp;
}

}  // namespace

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions opts)
    : backend_(std::move(backend)), opts_(std::move(opts)) {
  if (!backend_) throw ContractError("gateway needs a backend");
  backend_id_ = backend_->id();
  if (opts_.cache && !opts_.cache_dir.empty()) {
    std::filesystem::create_directories(opts_.cache_dir);
    cache_file_ = opts_.cache_dir / ("scores-" + sha256_hex(backend_id_).substr(0, 16) + ".jsonl");
    load_cache();
  }
}

void Gateway::load_cache() {
  std::ifstream in(cache_file_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      cache_[j.at("k").get<std::string>()] = j.at("v").get<std::vector<double>>();
    } catch (const json::exception&) {
      // A torn trailing line from an interrupted run; the entry is recomputed.
    }
  }
}

std::size_t Gateway::cache_size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::vector<double> Gateway::fetch(const ScoreRequest& req) {
  std::string key;
  if (opts_.cache) {
    json j = {{"m", mode_name(req.mode)},
              {"pre", req.pre},
              {"suf", req.suf},
              {"c", req.candidates},
              {"o", req.suffix_first}};
    key = sha256_hex(backend_id_ + '\x1f' + j.dump());
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  ++calls_;
  auto result = backend_->score(req);
  if (result.size() != req.candidates.size()) {
    throw ProtocolError("backend returned " + std::to_string(result.size()) + " scores for " +
                        std::to_string(req.candidates.size()) + " candidates");
  }
  if (opts_.cache) {
    std::lock_guard lock(mu_);
    auto [it, inserted] = cache_.emplace(key, result);
    if (inserted && !cache_file_.empty()) {
      std::ofstream out(cache_file_, std::ios::app);
      out << json{{"k", key}, {"v", result}}.dump() << '\n';
    }
  }
  return result;
}

bool Gateway::is_full_space(const std::vector<std::string>& mapped) const {
  const auto& space = backend_->candidate_space();
  if (mapped.size() != space.size()) return false;
  std::unordered_set<std::string> have(mapped.begin(), mapped.end());
  if (have.size() != space.size()) return false;
  return std::all_of(space.begin(), space.end(), [&](const auto& w) { return have.count(w) > 0; });
}

namespace {

struct Mapped {
  std::vector<std::string> words;
  std::vector<bool> unk;
};

Mapped map_candidates(const Vocabulary& v, const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw ContractError("candidate list is empty");
  Mapped m;
  for (const auto& c : candidates) {
    const bool known = v.contains(c);
    m.words.push_back(known ? c : std::string(Vocabulary::kUnk));
    m.unk.push_back(!known);
  }
  return m;
}

}  // namespace

Scores Gateway::score_forward(const std::vector<std::string>& pre,
                              const std::vector<std::string>& candidates) {
  auto m = map_candidates(backend_->vocab(), candidates);
  ScoreRequest req{ScoreMode::Forward, pre, {}, m.words, false};
  return Scores{candidates, fetch(req), std::move(m.unk)};
}

std::vector<double> Gateway::infill_raw(const std::vector<std::string>& pre,
                                        const std::vector<std::string>& suf,
                                        const std::vector<std::string>& mapped) {
  ScoreRequest req{ScoreMode::Infill, pre, suf, mapped, false};
  auto lp = fetch(req);
  if (opts_.average_orders && backend_->order_sensitive()) {
    req.suffix_first = true;
    auto swapped = fetch(req);
    for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = 0.5 * (lp[i] + swapped[i]);
  }
  if (!backend_->infill_normalized() && is_full_space(mapped)) lp = renormalize(std::move(lp));
  return lp;
}

Scores Gateway::score_infill(const std::vector<std::string>& pre, const std::vector<std::string>& suf,
                             const std::vector<std::string>& candidates) {
  auto m = map_candidates(backend_->vocab(), candidates);
  return Scores{candidates, infill_raw(pre, suf, m.words), std::move(m.unk)};
}

Scores Gateway::score_backward(const std::vector<std::string>& suf,
                               const std::vector<std::string>& candidates) {
  auto m = map_candidates(backend_->vocab(), candidates);
  if (backend_->native_backward()) {
    ScoreRequest req{ScoreMode::Backward, {}, suf, m.words, false};
    return Scores{candidates, fetch(req), std::move(m.unk)};
  }
  // Approximation: infill with an empty past, normalized over the full space.
  const auto& space = backend_->candidate_space();
  const auto full = infill_raw({}, suf, space);
  std::vector<double> lp;
  for (const auto& w : m.words) {
    auto it = std::find(space.begin(), space.end(), w);
    if (it == space.end()) {
      lp.push_back(infill_raw({}, suf, {w}).front());
    } else {
      lp.push_back(full[static_cast<std::size_t>(it - space.begin())]);
    }
  }
  return Scores{candidates, std::move(lp), std::move(m.unk)};
}

// --- batch scoring ---

std::vector<PredictabilityRecord> batch_score_corpus(Gateway& gateway, const Corpus& corpus,
                                                     const NGramModel& unigram,
                                                     const BatchOptions& opts, BatchReport* report) {
  if (unigram.order() != 1) throw ContractError("batch_score_corpus: unigram model must have order 1");
  const auto& space = gateway.candidate_space();
  std::unordered_map<std::string, std::size_t> space_index;
  for (std::size_t i = 0; i < space.size(); ++i) space_index.emplace(space[i], i);
  const auto& vocab = gateway.backend().vocab();

  std::vector<std::vector<PredictabilityRecord>> per_utt(corpus.size());
  std::vector<std::optional<std::string>> errors(corpus.size());
  parallel_for(corpus.size(), opts.jobs, [&](std::size_t i) {
    const auto& u = corpus.utterances[i];
    std::vector<PredictabilityRecord> recs;
    try {
      for (std::size_t t = 0; t < u.tokens.size(); ++t) {
        const auto& w = u.tokens[t];
        std::vector<std::string> pre;
        if (opts.speaker_tags) pre.push_back(speaker_tag(u.speaker));
        pre.insert(pre.end(), u.tokens.begin(), u.tokens.begin() + static_cast<std::ptrdiff_t>(t));
        std::vector<std::string> suf(u.tokens.begin() + static_cast<std::ptrdiff_t>(t + 1), u.tokens.end());

        PredictabilityRecord r;
        r.utt_index = i;
        r.conversation_id = u.conversation_id;
        r.t = t;
        r.word = w;
        const auto fwd = gateway.score_forward(pre, {w});
        r.logp_forward = fwd.logprobs[0];
        r.mapped_to_unk = fwd.mapped_to_unk[0];
        r.logp_backward = gateway.score_backward(suf, {w}).logprobs[0];
        const std::string mapped = vocab.contains(w) ? w : std::string(Vocabulary::kUnk);
        if (auto it = space_index.find(mapped); it != space_index.end()) {
          r.logp_bidirectional = gateway.score_infill(pre, suf, space).logprobs[it->second];
        } else {
          r.logp_bidirectional = gateway.score_infill(pre, suf, {w}).logprobs[0];
        }
        r.logp_unigram = unigram.cond_logprob(unigram.vocab().id(w), {});
        recs.push_back(std::move(r));
      }
      per_utt[i] = std::move(recs);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<PredictabilityRecord> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (errors[i]) {
      if (report) report->failures.push_back({i, *errors[i]});
      continue;
    }
    for (auto& r : per_utt[i]) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ctxpred
