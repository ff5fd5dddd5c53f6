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

#include "ctxpred/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace ctxpred {

void MarkovChain::validate() const {
  const auto n = static_cast<Eigen::Index>(states.size());
  if (n == 0) throw ContractError("Markov chain has no states");
  if (transition.rows() != n || transition.cols() != n) {
    throw ContractError(fmt::format("transition matrix is {}x{} for {} states", transition.rows(),
                                    transition.cols(), n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((transition.row(i).array() < 0).any() || !transition.row(i).allFinite()) {
      throw ContractError(fmt::format("transition row {} has a negative or non-finite entry", i));
    }
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-9) {
      throw ContractError(fmt::format("transition row {} sums to {}, not 1", i, transition.row(i).sum()));
    }
  }
  if (!initial.empty()) {
    if (initial.size() != states.size()) throw ContractError("initial distribution has the wrong length");
    double s = 0;
    for (double p : initial) {
      if (!(p >= 0)) throw ContractError("initial distribution has a negative entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ContractError("initial distribution does not sum to 1");
  }
  if (!(stop_prob > 0.0 && stop_prob <= 1.0)) throw ContractError("stop probability must be in (0, 1]");
}

Corpus generate_markov_corpus(std::size_t n_utts, const MarkovChain& chain, std::uint64_t seed) {
  chain.validate();
  const std::size_t k = chain.states.size();
  std::vector<double> init = chain.initial.empty() ? std::vector<double>(k, 1.0 / static_cast<double>(k)) : chain.initial;
  boost::random::discrete_distribution<std::size_t> start(init.begin(), init.end());
  std::vector<boost::random::discrete_distribution<std::size_t>> next;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> row(k);
    for (std::size_t j = 0; j < k; ++j) row[j] = chain.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    next.emplace_back(row.begin(), row.end());
  }
  boost::random::bernoulli_distribution<double> stop(chain.stop_prob);

  Corpus c;
  c.utterances.reserve(n_utts);
  for (std::size_t i = 0; i < n_utts; ++i) {
    Rng rng = stream_rng(seed, i);
    Utterance u;
    u.conversation_id = fmt::format("synth{:04d}", i / 50);
    u.speaker = i % 2 == 0 ? Speaker::A : Speaker::B;
    std::size_t s = start(rng);
    u.tokens.push_back(chain.states[s]);
    while (!stop(rng)) {
      s = next[s](rng);
      u.tokens.push_back(chain.states[s]);
    }
    c.utterances.push_back(std::move(u));
  }
  return c;
}

const std::vector<std::string>& policy_features() {
  static const std::vector<std::string> names = {"logp_unigram", "logp_forward", "sem_dist", "phon_dist", "cond_pmi"};
  return names;
}

void SpeakerPolicy::validate() const {
  if (!(temperature > 0.0)) throw ContractError("policy temperature must be > 0");
  if (static_cast<std::size_t>(true_beta.size()) != feature_names.size()) {
    throw ContractError(fmt::format("policy has {} coefficients for {} features", true_beta.size(),
                                    feature_names.size()));
  }
  const auto& known = ctxpred::feature_names();
  for (const auto& f : feature_names) {
    if (std::find(known.begin(), known.end(), f) == known.end()) {
      throw ContractError("policy feature '" + f + "' is not a row feature");
    }
  }
}

GaussianFeatureProvider::GaussianFeatureProvider(std::size_t n_candidates, std::vector<double> means,
                                                 std::vector<double> sds)
    : n_(n_candidates), means_(std::move(means)), sds_(std::move(sds)) {
  const std::size_t f = policy_features().size();
  if (n_ < 2) throw ContractError("Gaussian provider needs at least 2 candidates");
  if (means_.empty()) means_.assign(f, 0.0);
  if (sds_.empty()) sds_.assign(f, 0.3);
  if (means_.size() != f || sds_.size() != f) {
    throw ContractError(fmt::format("Gaussian provider needs {} means and sds", f));
  }
  for (double s : sds_) {
    if (!(s >= 0.0)) throw ContractError("Gaussian provider sd must be >= 0");
  }
}

SlotCandidates GaussianFeatureProvider::candidates(const Utterance&, std::size_t utt_index, std::size_t,
                                                   Rng& rng) {
  boost::random::normal_distribution<double> z(0.0, 1.0);
  SlotCandidates sc;
  sc.target = 0;
  sc.rows.resize(n_);
  for (std::size_t j = 0; j < n_; ++j) {
    FeatureRow& r = sc.rows[j];
    r.frame_id = utt_index;
    r.candidate = "w" + std::to_string(j);
    double* dst[] = {&r.logp_unigram, &r.logp_forward, &r.sem_dist, &r.phon_dist, &r.cond_pmi};
    for (std::size_t f = 0; f < 5; ++f) *dst[f] = means_[f] + sds_[f] * z(rng);
  }
  return sc;
}

SlotCandidates PipelineFeatureProvider::candidates(const Utterance& u, std::size_t utt_index, std::size_t slot,
                                                   Rng&) {
  SubstitutionFrame f;
  f.frame_id = utt_index;
  f.conversation_id = u.conversation_id;
  f.utt_index = utt_index;
  f.pre_context.assign(u.tokens.begin(), u.tokens.begin() + static_cast<std::ptrdiff_t>(slot));
  f.post_context.assign(u.tokens.begin() + static_cast<std::ptrdiff_t>(slot) + 1, u.tokens.end());
  f.repair = u.tokens[slot];
  f.error = u.tokens[slot];
  AssembleOptions opts = opts_;
  opts.policy = MissingPolicy::Strict;
  SlotCandidates sc;
  sc.rows = assemble_rows(f, ctx_, opts);
  auto it = std::find_if(sc.rows.begin(), sc.rows.end(), [&](const FeatureRow& r) { return r.candidate == f.repair; });
  if (it == sc.rows.end()) throw ContractError("target '" + f.repair + "' has no candidate row");
  sc.target = static_cast<std::size_t>(it - sc.rows.begin());
  for (auto& r : sc.rows) r.produced = 0;
  return sc;
}

std::vector<double> softmax_choice(const std::vector<double>& utility, double temperature,
                                   const std::vector<bool>& eligible) {
  if (!(temperature > 0.0)) throw ContractError("temperature must be > 0");
  if (eligible.size() != utility.size()) throw ContractError("softmax_choice: size mismatch");
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < utility.size(); ++j) {
    if (eligible[j]) top = std::max(top, utility[j] / temperature);
  }
  if (!std::isfinite(top)) throw ContractError("softmax_choice: no eligible candidate with finite utility");
  std::vector<double> p(utility.size(), 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < utility.size(); ++j) {
    if (eligible[j]) z += p[j] = std::exp(utility[j] / temperature - top);
  }
  for (double& x : p) x /= z;
  return p;
}

SimulationResult simulate_substitutions(const Corpus& corpus, const SpeakerPolicy& policy, FeatureProvider& provider,
                                        std::uint64_t seed, const SimulationOptions& opts) {
  policy.validate();
  const std::size_t n = corpus.utterances.size();
  std::vector<std::optional<SubstitutionFrame>> frames(n);
  std::vector<std::vector<FeatureRow>> rows(n);

  parallel_for(n, opts.jobs, [&](std::size_t i) {
    const Utterance& u = corpus.utterances[i];
    if (u.tokens.empty()) return;
    Rng rng = stream_rng(seed, i);
    boost::random::uniform_int_distribution<std::size_t> pick_slot(0, u.tokens.size() - 1);
    const std::size_t slot = pick_slot(rng);
    SlotCandidates sc = provider.candidates(u, i, slot, rng);
    if (sc.rows.size() < 2 || sc.target >= sc.rows.size()) {
      throw ContractError(fmt::format("utterance {}: provider returned no alternative to the target", i));
    }

    std::vector<double> utility(sc.rows.size());
    std::vector<bool> eligible(sc.rows.size(), true);
    eligible[sc.target] = false;
    for (std::size_t j = 0; j < sc.rows.size(); ++j) {
      double v = 0.0;
      for (std::size_t f = 0; f < policy.feature_names.size(); ++f) {
        v += policy.true_beta[static_cast<Eigen::Index>(f)] * sc.rows[j].feature(policy.feature_names[f]);
      }
      if (!std::isfinite(v)) throw ContractError(fmt::format("utterance {}: non-finite utility", i));
      utility[j] = v;
    }
    const auto p = softmax_choice(utility, policy.temperature, eligible);
    const double r = boost::random::uniform_01<double>()(rng);
    std::size_t chosen = sc.rows.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!eligible[j]) continue;
      acc += p[j];
      chosen = j;
      if (r < acc) break;
    }

    SubstitutionFrame f;
    f.frame_id = i;
    f.conversation_id = u.conversation_id;
    f.utt_index = i;
    f.pre_context.assign(u.tokens.begin(), u.tokens.begin() + static_cast<std::ptrdiff_t>(slot));
    f.post_context.assign(u.tokens.begin() + static_cast<std::ptrdiff_t>(slot) + 1, u.tokens.end());
    f.error = sc.rows[chosen].candidate;
    f.repair = sc.rows[sc.target].candidate;
    if (u.pos) f.pos = (*u.pos)[slot];
    frames[i] = std::move(f);

    for (std::size_t j = 0; j < sc.rows.size(); ++j) {
      if (j == sc.target && !opts.include_target_row) continue;
      FeatureRow row = std::move(sc.rows[j]);
      row.frame_id = i;
      row.produced = j == chosen ? 1 : 0;
      rows[i].push_back(std::move(row));
    }
  });

  SimulationResult res;
  for (std::size_t i = 0; i < n; ++i) {
    if (!frames[i]) continue;
    res.frames.push_back(std::move(*frames[i]));
    res.rows.insert(res.rows.end(), std::make_move_iterator(rows[i].begin()), std::make_move_iterator(rows[i].end()));
  }
  return res;
}

// --- config ---

namespace {

using nlohmann::json;

const json& field(const json& j, const std::string& path, const char* key) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  if (!j.contains(key)) throw SchemaError(path + "." + key, "required field is missing");
  return j.at(key);
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  return j.get<double>();
}

std::uint64_t as_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) throw SchemaError(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

std::vector<double> as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  return v;
}

}  // namespace

SimulationConfig parse_simulation_config(const json& j, const std::string& path) {
  SimulationConfig cfg;
  cfg.n_utts = as_count(field(j, path, "n_utts"), path + ".n_utts");
  cfg.seed = as_count(field(j, path, "seed"), path + ".seed");

  const std::string tp = path + ".transition";
  const json& t = field(j, path, "transition");
  const json* matrix = &t;
  std::string mp = tp;
  if (t.is_object()) {
    matrix = &field(t, tp, "matrix");
    mp = tp + ".matrix";
    const json& st = field(t, tp, "states");
    if (!st.is_array()) throw SchemaError(tp + ".states", "expected an array of strings");
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (!st[i].is_string()) throw SchemaError(tp + ".states[" + std::to_string(i) + "]", "expected a string");
      cfg.chain.states.push_back(st[i].get<std::string>());
    }
  }
  if (!matrix->is_array() || matrix->empty()) throw SchemaError(mp, "expected a non-empty square matrix");
  const auto k = static_cast<Eigen::Index>(matrix->size());
  cfg.chain.transition.resize(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const std::string rp = mp + "[" + std::to_string(r) + "]";
    const auto row = as_vector((*matrix)[static_cast<std::size_t>(r)], rp);
    if (static_cast<Eigen::Index>(row.size()) != k) throw SchemaError(rp, fmt::format("expected {} entries", k));
    double sum = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (row[static_cast<std::size_t>(c)] < 0) throw SchemaError(rp, "negative transition probability");
      cfg.chain.transition(r, c) = row[static_cast<std::size_t>(c)];
      sum += row[static_cast<std::size_t>(c)];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw SchemaError(rp, fmt::format("row sums to {}, not 1", sum));
  }
  if (cfg.chain.states.empty()) {
    for (Eigen::Index i = 0; i < k; ++i) cfg.chain.states.push_back("s" + std::to_string(i));
  }
  if (static_cast<Eigen::Index>(cfg.chain.states.size()) != k) {
    throw SchemaError(tp + ".states", "length does not match the matrix");
  }
  if (j.contains("stop_prob")) cfg.chain.stop_prob = as_number(j["stop_prob"], path + ".stop_prob");
  if (!(cfg.chain.stop_prob > 0 && cfg.chain.stop_prob <= 1)) throw SchemaError(path + ".stop_prob", "must be in (0, 1]");
  if (j.contains("initial")) cfg.chain.initial = as_vector(j["initial"], path + ".initial");

  const std::string bp = path + ".true_beta";
  const json& b = field(j, path, "true_beta");
  if (b.is_array()) {
    const auto v = as_vector(b, bp);
    if (v.size() != policy_features().size()) {
      throw SchemaError(bp, fmt::format("expected {} coefficients ({})", policy_features().size(),
                                        fmt::format("{}", fmt::join(policy_features(), ", "))));
    }
    cfg.policy.true_beta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (b.is_object()) {
    const auto& known = feature_names();
    for (const auto& [name, val] : b.items()) {
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw SchemaError(bp + "." + name, "unknown feature");
      }
    }
    // Canonical order: the policy features first, then any other row feature.
    std::vector<std::string> order = policy_features();
    for (const auto& name : known) {
      if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    }
    cfg.policy.feature_names.clear();
    std::vector<double> v;
    for (const auto& name : order) {
      if (!b.contains(name)) continue;
      cfg.policy.feature_names.push_back(name);
      v.push_back(as_number(b[name], bp + "." + name));
    }
    cfg.policy.true_beta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else {
    throw SchemaError(bp, "expected an array or an object");
  }
  cfg.policy.temperature = as_number(field(j, path, "temperature"), path + ".temperature");
  if (!(cfg.policy.temperature > 0)) throw SchemaError(path + ".temperature", "must be > 0");

  if (j.contains("provider")) {
    const std::string pp = path + ".provider";
    const json& p = j["provider"];
    const json& kind = field(p, pp, "kind");
    if (!kind.is_string() || (kind != "gaussian" && kind != "pipeline")) {
      throw SchemaError(pp + ".kind", "expected \"gaussian\" or \"pipeline\"");
    }
    cfg.provider = kind.get<std::string>();
    if (p.contains("n_candidates")) cfg.n_candidates = as_count(p["n_candidates"], pp + ".n_candidates");
    if (p.contains("means")) cfg.feature_means = as_vector(p["means"], pp + ".means");
    if (p.contains("sds")) cfg.feature_sds = as_vector(p["sds"], pp + ".sds");
  }
  return cfg;
}

std::string ground_truth_json(const SimulationConfig& cfg, const SimulationResult& result) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json beta = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < cfg.policy.feature_names.size(); ++i) {
    beta[cfg.policy.feature_names[i]] = cfg.policy.true_beta[static_cast<Eigen::Index>(i)];
  }
  j["true_beta"] = std::move(beta);
  j["temperature"] = cfg.policy.temperature;
  j["seed"] = cfg.seed;
  j["n_utts"] = cfg.n_utts;
  j["n_frames"] = result.frames.size();
  j["n_rows"] = result.rows.size();
  j["provider"] = cfg.provider;
  if (cfg.provider == "gaussian") j["n_candidates"] = cfg.n_candidates;
  j["choice_rule"] = "softmax over candidates other than the latent target";
  return j.dump(2);
}

}  // namespace ctxpred
