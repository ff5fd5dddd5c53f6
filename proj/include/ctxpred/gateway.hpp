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

#ifndef CTXPRED_GATEWAY_HPP_
#define CTXPRED_GATEWAY_HPP_

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxpred/corpus.hpp"
#include "ctxpred/ngram.hpp"

namespace ctxpred {

// Backend could not be reached or answered with a server fault.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend rejected the request (malformed or unsupported).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

enum class ScoreMode { Forward, Backward, Infill };

struct ScoreRequest {
  ScoreMode mode = ScoreMode::Forward;
  std::vector<std::string> pre;
  std::vector<std::string> suf;
  std::vector<std::string> candidates;
  bool suffix_first = false;  // infill block order
};

// A probability source. Implementations return one natural-log score per
// candidate, in request order. Candidates are vocabulary words (the gateway
// maps out-of-vocabulary words to <unk> before calling).
class Backend {
 public:
  virtual ~Backend() = default;

  // Stable identity of the model behind the backend; part of cache keys.
  virtual std::string id() const = 0;
  virtual const Vocabulary& vocab() const = 0;
  // Every word a normalized distribution ranges over.
  virtual const std::vector<std::string>& candidate_space() const = 0;
  virtual std::vector<double> score(const ScoreRequest& req) = 0;

  // Infill scores are already normalized over candidate_space().
  virtual bool infill_normalized() const { return false; }
  // Backward mode is answered by a dedicated model; otherwise the gateway
  // approximates it with an infill query that has an empty prefix.
  virtual bool native_backward() const { return false; }
  // Block order matters to the backend (neural infill models).
  virtual bool order_sensitive() const { return true; }
};

// In-process backend over a forward and (optionally) a backward n-gram model.
class NgramBackend final : public Backend {
 public:
  NgramBackend(std::shared_ptr<const NGramModel> forward,
               std::shared_ptr<const NGramModel> backward = nullptr);

  std::string id() const override { return id_; }
  const Vocabulary& vocab() const override { return forward_->vocab(); }
  const std::vector<std::string>& candidate_space() const override { return space_; }
  std::vector<double> score(const ScoreRequest& req) override;
  bool infill_normalized() const override { return true; }
  bool native_backward() const override { return backward_ != nullptr; }
  bool order_sensitive() const override { return false; }

  const NGramModel& forward() const { return *forward_; }

 private:
  std::shared_ptr<const NGramModel> forward_;
  std::shared_ptr<const NGramModel> backward_;
  std::vector<std::string> space_;
  std::string id_;
};

struct Scores {
  std::vector<std::string> candidates;  // as supplied
  std::vector<double> logprobs;
  std::vector<bool> mapped_to_unk;

  double at(const std::string& word) const;
  std::size_t size() const { return candidates.size(); }
};

struct GatewayOptions {
  // Directory for the persistent response cache; empty keeps it in memory.
  std::filesystem::path cache_dir;
  bool cache = true;
  // Average infill log-probabilities over both block orders.
  bool average_orders = false;
};

// Uniform front end over a Backend: candidate mapping, normalization,
// backward sourcing and a content-addressed response cache. Thread-safe.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions opts = {});

  Scores score_forward(const std::vector<std::string>& pre, const std::vector<std::string>& candidates);
  Scores score_backward(const std::vector<std::string>& suf, const std::vector<std::string>& candidates);
  Scores score_infill(const std::vector<std::string>& pre, const std::vector<std::string>& suf,
                      const std::vector<std::string>& candidates);

  Backend& backend() { return *backend_; }
  const std::vector<std::string>& candidate_space() const { return backend_->candidate_space(); }
  // Requests that reached the backend (cache misses).
  std::size_t backend_calls() const { return calls_.load(); }
  std::size_t cache_size() const;

 private:
  std::vector<double> fetch(const ScoreRequest& req);
  bool is_full_space(const std::vector<std::string>& mapped) const;
  std::vector<double> infill_raw(const std::vector<std::string>& pre, const std::vector<std::string>& suf,
                                 const std::vector<std::string>& mapped);
  void load_cache();

  std::shared_ptr<Backend> backend_;
  GatewayOptions opts_;
  std::string backend_id_;
  std::filesystem::path cache_file_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<double>> cache_;
  std::atomic<std::size_t> calls_{0};
};

// Per-token log-probabilities, natural log.
struct PredictabilityRecord {
  std::size_t utt_index = 0;
  std::string conversation_id;
  std::size_t t = 0;  // 0-based token position
  std::string word;
  double logp_unigram = 0.0;
  double logp_forward = 0.0;
  double logp_backward = 0.0;
  double logp_bidirectional = 0.0;
  bool mapped_to_unk = false;
};

struct BatchOptions {
  std::size_t jobs = 1;
  // Prepend the speaker tag to the past context.
  bool speaker_tags = false;
};

struct BatchReport {
  struct Failure {
    std::size_t utt_index;
    std::string error;
  };
  std::vector<Failure> failures;
};

// Scores every token of the corpus. Forward uses C_<t, backward C_>t and the
// bidirectional value the infill distribution over the full candidate space.
// Failed utterances are listed in the report and omitted from the output.
std::vector<PredictabilityRecord> batch_score_corpus(Gateway& gateway, const Corpus& corpus,
                                                     const NGramModel& unigram,
                                                     const BatchOptions& opts = {},
                                                     BatchReport* report = nullptr);

}  // namespace ctxpred

#endif  // CTXPRED_GATEWAY_HPP_
