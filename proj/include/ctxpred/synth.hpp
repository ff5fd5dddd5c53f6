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

#ifndef CTXPRED_SYNTH_HPP_
#define CTXPRED_SYNTH_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "ctxpred/corpus.hpp"
#include "ctxpred/substitution.hpp"

namespace ctxpred {

struct MarkovChain {
  std::vector<std::string> states;
  Eigen::MatrixXd transition;   // row-stochastic, states x states
  std::vector<double> initial;  // empty: uniform
  double stop_prob = 0.1;       // per-token end probability (geometric length)

  // Throws ContractError for a non-square, negative or non-stochastic matrix.
  void validate() const;
};

// Utterance i draws from its own stream of `seed`; speakers alternate A/B.
Corpus generate_markov_corpus(std::size_t n_utts, const MarkovChain& chain, std::uint64_t seed);

// Features the policy weighs, in coefficient order.
const std::vector<std::string>& policy_features();

struct SpeakerPolicy {
  std::vector<std::string> feature_names = policy_features();
  Eigen::VectorXd true_beta;
  double temperature = 1.0;

  void validate() const;
};

// Candidate rows for one slot. rows[target] is the latent target word.
struct SlotCandidates {
  std::vector<FeatureRow> rows;
  std::size_t target = 0;
};

class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual SlotCandidates candidates(const Utterance& u, std::size_t utt_index, std::size_t slot, Rng& rng) = 0;
};

// Independent Gaussian features for `n_candidates` synthetic words per slot.
class GaussianFeatureProvider final : public FeatureProvider {
 public:
  GaussianFeatureProvider(std::size_t n_candidates, std::vector<double> means, std::vector<double> sds);
  SlotCandidates candidates(const Utterance& u, std::size_t utt_index, std::size_t slot, Rng& rng) override;

 private:
  std::size_t n_;
  std::vector<double> means_, sds_;
};

// Features from the real assembly path: the word at the slot is the target,
// and every vocabulary word is a candidate.
class PipelineFeatureProvider final : public FeatureProvider {
 public:
  PipelineFeatureProvider(AssembleContext ctx, AssembleOptions opts) : ctx_(ctx), opts_(opts) {}
  SlotCandidates candidates(const Utterance& u, std::size_t utt_index, std::size_t slot, Rng& rng) override;

 private:
  AssembleContext ctx_;
  AssembleOptions opts_;
};

// Choice probabilities exp(u_j / T) / sum, over the entries with eligible[j].
std::vector<double> softmax_choice(const std::vector<double>& utility, double temperature,
                                   const std::vector<bool>& eligible);

struct SimulationOptions {
  std::size_t jobs = 1;
  // Keep the latent target's row (never produced) in the output rows.
  bool include_target_row = false;
};

struct SimulationResult {
  std::vector<SubstitutionFrame> frames;
  std::vector<FeatureRow> rows;
};

// One slot per non-empty utterance. The produced word is drawn from the
// softmax of true_beta . features / temperature over candidates other than
// the latent target, which becomes the repair.
SimulationResult simulate_substitutions(const Corpus& corpus, const SpeakerPolicy& policy, FeatureProvider& provider,
                                        std::uint64_t seed, const SimulationOptions& opts = {});

struct SimulationConfig {
  std::size_t n_utts = 0;
  MarkovChain chain;
  SpeakerPolicy policy;
  std::uint64_t seed = 0;
  // "gaussian" or "pipeline"
  std::string provider = "gaussian";
  std::size_t n_candidates = 20;
  std::vector<double> feature_means;
  std::vector<double> feature_sds;
};

// {n_utts, transition: {states, matrix} | matrix, true_beta, temperature,
// seed, stop_prob?, initial?, provider?}. Errors name the offending field.
SimulationConfig parse_simulation_config(const nlohmann::json& j, const std::string& path = "$");

std::string ground_truth_json(const SimulationConfig& cfg, const SimulationResult& result);

}  // namespace ctxpred

#endif  // CTXPRED_SYNTH_HPP_
