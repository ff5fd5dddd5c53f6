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

#ifndef CTXPRED_SUBSTITUTION_HPP_
#define CTXPRED_SUBSTITUTION_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxpred/corpus.hpp"
#include "ctxpred/gateway.hpp"
#include "ctxpred/ngram.hpp"
#include "ctxpred/noisy_targets.hpp"

namespace ctxpred {

// One substitution error in a fluent template: pre + [repair] + post is the
// utterance with every disfluency resolved.
struct SubstitutionFrame {
  std::size_t frame_id = 0;
  std::string conversation_id;
  std::size_t utt_index = 0;
  std::vector<std::string> pre_context;
  std::vector<std::string> post_context;
  std::string error;
  std::string repair;
  std::string pos;
  std::optional<std::string> category;

  std::vector<std::string> fluent() const;
  bool operator==(const SubstitutionFrame&) const = default;
};

inline constexpr const char* kErrorCategories[] = {"semantic", "phonological", "mixed", "morphosyntactic"};
bool is_error_category(const std::string& c);

struct ExtractReport {
  std::size_t candidate_pairs = 0;
  // reason -> count: unequal_length, intervening_material, pos_mismatch,
  // missing_pos, identical_words, category_filtered
  std::map<std::string, std::size_t> excluded;
};

struct ExtractOptions {
  // Keep only frames whose annotated category is listed; empty keeps all.
  std::set<std::string> categories;
};

// A single-word reparandum and its single-word repair qualify when their POS
// tags match, the words differ, and whatever lies between them is filler,
// repetition, or a retrace of the words right before the reparandum
// ("whether you whether we").
std::vector<SubstitutionFrame> extract_frames(const Corpus& corpus, const ExtractOptions& opts = {},
                                              ExtractReport* report = nullptr);

void write_frames_jsonl(std::ostream& out, const std::vector<SubstitutionFrame>& frames);
std::vector<SubstitutionFrame> read_frames_jsonl(std::istream& in);

enum class LexicalClass { Function, Content };
std::string_view to_string(LexicalClass c);
LexicalClass lexical_class(const std::string& word);

// Orthographic/phonological guess at the error category. Non-authoritative:
// same root -> morphosyntactic; shared first or last segment -> phonological;
// otherwise semantic.
std::string heuristic_category(const std::string& error, const std::string& repair,
                               const PronLexicon* lexicon = nullptr);

struct FeatureRow {
  std::size_t frame_id = 0;
  std::string candidate;
  int produced = 0;
  std::optional<LexicalClass> lexical_class;
  double logp_unigram = 0.0;
  double logp_forward = 0.0;
  double logp_backward = 0.0;
  double logp_bidirectional = 0.0;
  double uncond_pmi = 0.0;
  double cond_pmi = 0.0;
  double rel_backward = 0.0;
  double sem_dist = 0.0;
  double phon_dist = 0.0;

  // Named numeric feature, for design construction.
  double feature(const std::string& name) const;
};

// Numeric columns accepted by FeatureRow::feature.
const std::vector<std::string>& feature_names();

enum class MissingPolicy { Skip, Strict };

struct AssembleOptions {
  double noise_var = 0.0;  // variance of the semantic-target noise
  bool phonetic_noise = true;
  std::uint64_t seed = 0;
  MissingPolicy policy = MissingPolicy::Skip;
  // Random subset of negative candidates per frame; 0 uses the whole vocabulary.
  std::size_t negative_sample = 0;
};

struct AssembleContext {
  Gateway* gateway = nullptr;
  const NGramModel* unigram = nullptr;
  const EmbeddingTable* embeddings = nullptr;
  const PronLexicon* lexicon = nullptr;
  const PhoneticFeatureTable* features = nullptr;
};

struct AssembleReport {
  std::size_t dropped_rows = 0;
  struct SkippedFrame {
    std::size_t frame_id;
    std::string reason;
  };
  std::vector<SkippedFrame> skipped_frames;
};

// One row per content word of the gateway's vocabulary. Features are the
// predictability of the candidate in the slot and its distance to a noisy
// copy of the repair. The observed error is the one produced row.
std::vector<FeatureRow> assemble_rows(const SubstitutionFrame& frame, const AssembleContext& ctx,
                                      const AssembleOptions& opts, AssembleReport* report = nullptr);

std::vector<FeatureRow> assemble_all(const std::vector<SubstitutionFrame>& frames, const AssembleContext& ctx,
                                     const AssembleOptions& opts, std::size_t jobs = 1,
                                     AssembleReport* report = nullptr);

// Rows CSV, columns in feature_row_header() order.
const std::vector<std::string>& feature_row_header();
void write_rows_csv(std::ostream& out, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_rows_csv(std::istream& in);

}  // namespace ctxpred

#endif  // CTXPRED_SUBSTITUTION_HPP_
