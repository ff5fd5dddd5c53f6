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

#ifndef CTXPRED_PIPELINE_HPP_
#define CTXPRED_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctxpred/csv.hpp"
#include "ctxpred/gateway.hpp"
#include "ctxpred/ngram.hpp"
#include "ctxpred/stats.hpp"
#include "ctxpred/substitution.hpp"

namespace ctxpred {

// A stage of the pipeline failed; what() carries the underlying cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct FitSpec {
  std::string name;
  std::string kind = "logistic";  // ols | lmm_ri | logistic
  std::string formula;
  std::string data = "rows";      // rows | scores
  std::string group;              // grouping column for lmm_ri
  bool standardize = false;
  std::size_t bootstrap = 0;      // resamples; 0 skips intervals
};

struct FitOutput {
  FitResult fit;
  std::optional<BootstrapResult> bootstrap;
  std::string json;  // fit JSON, bootstrap intervals under extras.bootstrap
};

// Builds the design from the spec's formula and fits it. Bootstrap resamples
// whole frames when the table has a frame_id column.
FitOutput fit_table(const FitSpec& spec, const csv::Table& data, std::uint64_t seed, std::size_t jobs = 1);

struct CompareSpec {
  std::string small;
  std::string big;
};

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool strict = true;
  LoadOptions load;

  NGramOptions ngram;
  int min_count = 1;

  // "ngram" (models trained by the run), ngram:<dir>, http:<url>, stdio:<cmd>
  std::string backend = "ngram";
  bool average_orders = false;
  std::filesystem::path cache_dir;

  bool augment = true;
  double swap_prob = 0.5;
  std::size_t samples_per_utterance = 1;

  std::vector<std::string> categories;

  std::filesystem::path embeddings;
  std::filesystem::path lexicon;
  std::filesystem::path phonetic_features;
  double noise_var = 0.0;
  bool phonetic_noise = true;
  MissingPolicy policy = MissingPolicy::Skip;
  std::size_t negative_sample = 0;

  std::vector<FitSpec> fits;
  std::vector<CompareSpec> compares;

  std::vector<std::string> stages;  // empty runs every configured stage
};

// Relative paths resolve against base_dir. Throws SchemaError naming the
// field ("$.ngram.order"). Unknown keys are rejected when "strict" is true.
PipelineConfig parse_pipeline_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

const std::vector<std::string>& pipeline_stages();

// Builds a backend from "ngram:<dir>", "http:<url>" or "stdio:<cmd>". The
// wire backends use `vocab` as the shared token list.
std::shared_ptr<Backend> make_backend(const std::string& spec, const Vocabulary* vocab = nullptr);

// Writes files atomically (temp + rename) and remembers what was written so a
// failed run can be rolled back.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir);
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& content);
  void remove_all();
  // manifest.json: sorted file list with SHA-256 and sizes.
  void write_manifest(const nlohmann::json& extra);
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
};

struct RunSummary {
  std::vector<std::string> stages_run;
  std::vector<std::string> outputs;
};

// Runs the configured stages in order; throws StageError after removing every
// file the run wrote.
RunSummary run_pipeline(const PipelineConfig& cfg, std::ostream& log);

}  // namespace ctxpred

#endif  // CTXPRED_PIPELINE_HPP_
