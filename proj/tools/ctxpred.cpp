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

// ctxpred: command-line front end.

#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ctxpred/corpus.hpp"
#include "ctxpred/design.hpp"
#include "ctxpred/gateway.hpp"
#include "ctxpred/infill.hpp"
#include "ctxpred/measures.hpp"
#include "ctxpred/ngram.hpp"
#include "ctxpred/noisy_targets.hpp"
#include "ctxpred/pipeline.hpp"
#include "ctxpred/stats.hpp"
#include "ctxpred/substitution.hpp"
#include "ctxpred/synth.hpp"
#include "ctxpred/wire.hpp"

namespace fs = std::filesystem;
using namespace ctxpred;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Models {
  std::shared_ptr<NGramModel> forward, backward, unigram;
};

Models load_models(const fs::path& dir) {
  Models m;
  m.forward = std::make_shared<NGramModel>(NGramModel::load_file((dir / "ngram_forward.json").string()));
  if (fs::exists(dir / "ngram_backward.json")) {
    m.backward = std::make_shared<NGramModel>(NGramModel::load_file((dir / "ngram_backward.json").string()));
  }
  m.unigram = std::make_shared<NGramModel>(NGramModel::load_file((dir / "ngram_unigram.json").string()));
  return m;
}

std::unique_ptr<Gateway> open_gateway(const std::string& spec, const Models& m, bool average_orders) {
  std::shared_ptr<Backend> backend;
  if (spec.empty() || spec == "ngram") {
    backend = std::make_shared<NgramBackend>(m.forward, m.backward);
  } else {
    backend = make_backend(spec, &m.forward->vocab());
  }
  GatewayOptions g;
  g.average_orders = average_orders;
  if (const char* env = std::getenv("CTXPRED_CACHE_DIR"); env && *env) g.cache_dir = env;
  return std::make_unique<Gateway>(backend, g);
}

// Models directory implied by an ngram:<dir> backend unless given explicitly.
fs::path models_dir(const std::string& models, const std::string& backend) {
  if (!models.empty()) return models;
  if (backend.rfind("ngram:", 0) == 0) return backend.substr(6);
  throw ContractError("--models is required with backend '" + backend + "'");
}

struct Check {
  std::string name;
  bool ok;
  std::string detail;
};

std::vector<Check> selfcheck() {
  std::vector<Check> checks;
  auto add = [&](std::string name, bool ok, std::string detail) { checks.push_back({std::move(name), ok, std::move(detail)}); };

  std::istringstream in("{\"speaker\":\"A\",\"tokens\":[\"a\",\"b\"]}\n{\"speaker\":\"A\",\"tokens\":[\"a\",\"c\"]}\n");
  const Corpus corpus = parse_corpus(in);
  const Vocabulary vocab = build_vocab(corpus, 1);
  const NGramModel fwd = train_ngram(corpus, vocab, {});
  const WordId a = vocab.id("a"), b = vocab.id("b");
  const std::vector<WordId> pre{a};
  const double p_ba = std::exp(fwd.cond_logprob(b, pre));
  add("bigram p(b|a) = 1/3", std::abs(p_ba - 1.0 / 3.0) < 1e-12, fmt::format("{:.12f}", p_ba));
  const std::vector<WordId> suf{Vocabulary::kEosId};
  const double p_inf = std::exp(fwd.infill_logprob(b, pre, suf));
  add("infill p(b|a _ <eos>) = 0.397", std::abs(p_inf - 0.397) < 5e-4, fmt::format("{:.6f}", p_inf));

  double mass = 0;
  for (double lp : fwd.infill_distribution(pre, suf)) mass += std::exp(lp);
  add("infill distribution sums to 1", std::abs(mass - 1.0) < 1e-9, fmt::format("{:.3e}", mass - 1.0));

  const auto ids = fwd.utterance_ids(corpus.utterances[0]);
  const auto sym = pmi_symmetry_check(fwd, ids, 0);
  add("conditional PMI symmetry", sym.discrepancy() < 1e-9, fmt::format("{:.3e}", sym.discrepancy()));

  const auto l1 = lrt_statistic(2551.95, 1), l2 = lrt_statistic(41.06, 1);
  add("LRT chi2 5103.90", std::abs(l1.chi2 - 5103.9) < 5e-3, fmt::format("{:.2f}", l1.chi2));
  add("LRT chi2 82.12", std::abs(l2.chi2 - 82.12) < 5e-3, fmt::format("{:.2f}", l2.chi2));

  FeatureMatrix x(1);
  x[0].fill(1);
  FeatureMatrix y = x;
  y[0][0] = -1;
  const double d = phonetic_distance(x, y);
  add("phonetic distance 1/22", std::abs(d - 1.0 / 22.0) < 1e-15, fmt::format("{:.6f}", d));
  return checks;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"ctxpred: contextual predictability measures, substitution frames and regression fits"};
  app.require_subcommand(1);
  std::string stage = "cli";

  // train-ngram
  std::string corpus_path, out_dir = ".";
  int order = 2, min_count = 1;
  double alpha = 1.0;
  bool speaker_tags = false, lenient = false, keep_case = false;
  auto* train = app.add_subcommand("train-ngram", "Train forward, backward and unigram models");
  train->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  train->add_option("--out-dir", out_dir, "Output directory");
  train->add_option("--order", order, "n-gram order")->check(CLI::Range(1, 10));
  train->add_option("--alpha", alpha, "Laplace smoothing constant")->check(CLI::PositiveNumber);
  train->add_option("--min-count", min_count, "Vocabulary frequency threshold")->check(CLI::Range(1, 1 << 30));
  train->add_flag("--speaker-tags", speaker_tags, "Condition forward models on the speaker tag");

  // augment
  std::uint64_t seed = 0;
  double swap_prob = 0.5;
  std::size_t samples = 1;
  auto* augment = app.add_subcommand("augment", "Write infill training sequences");
  augment->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  augment->add_option("--out-dir", out_dir, "Output directory");
  augment->add_option("--seed", seed, "Random seed");
  augment->add_option("--swap-prob", swap_prob, "Probability of the suffix-first order")->check(CLI::Range(0.0, 1.0));
  augment->add_option("--samples", samples, "Records per utterance")->check(CLI::PositiveNumber);
  augment->add_flag("--speaker-tags", speaker_tags, "Speaker tag at the head of the prefix block");

  // score
  std::string backend_spec, models;
  std::size_t jobs = 1;
  bool average_orders = false;
  auto* score = app.add_subcommand("score", "Per-token predictability of a corpus");
  score->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  score->add_option("--backend", backend_spec, "ngram:<dir> | http:<url> | stdio:<cmd>")->required();
  score->add_option("--models", models, "Directory with vocabulary and unigram model");
  score->add_option("--out-dir", out_dir, "Output directory");
  score->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  score->add_flag("--average-orders", average_orders, "Average infill scores over both block orders");
  score->add_flag("--speaker-tags", speaker_tags, "Prepend the speaker tag to the past context");

  // measures
  std::string scores_path;
  auto* measures = app.add_subcommand("measures", "Recompute measures and correlations from a scores CSV");
  measures->add_option("--scores", scores_path, "Scores CSV")->required();
  measures->add_option("--out-dir", out_dir, "Output directory");

  // extract-frames
  std::vector<std::string> categories;
  auto* extract = app.add_subcommand("extract-frames", "Substitution frames from an annotated corpus");
  extract->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  extract->add_option("--out-dir", out_dir, "Output directory");
  extract->add_option("--category", categories, "Keep only these error categories")
      ->check(CLI::IsMember({"semantic", "phonological", "mixed", "morphosyntactic"}))
      ->delimiter(',');

  for (auto* sub : {train, augment, score, extract}) {
    sub->add_flag("--lenient", lenient, "Skip malformed corpus lines");
    sub->add_flag("--keep-case", keep_case, "Do not lowercase tokens");
  }

  // features
  std::string frames_path, emb_path, lex_path, feat_path, policy = "skip";
  double noise_var = 0.0;
  std::size_t negative_sample = 0;
  auto* features = app.add_subcommand("features", "Per-candidate regression rows for each frame");
  features->add_option("--frames", frames_path, "Frames JSONL")->required();
  features->add_option("--backend", backend_spec, "ngram:<dir> | http:<url> | stdio:<cmd>")->required();
  features->add_option("--models", models, "Directory with vocabulary and unigram model");
  features->add_option("--embeddings", emb_path, "Word vectors");
  features->add_option("--lexicon", lex_path, "Pronunciation lexicon TSV");
  features->add_option("--phonetic-features", feat_path, "Segment feature TSV");
  features->add_option("--noise-var", noise_var, "Variance of the semantic-target noise")->check(CLI::NonNegativeNumber);
  features->add_option("--policy", policy, "Missing-entry policy")->check(CLI::IsMember({"skip", "strict"}));
  features->add_option("--negative-sample", negative_sample, "Negatives per frame (0 = whole vocabulary)");
  features->add_option("--seed", seed, "Random seed");
  features->add_option("--out-dir", out_dir, "Output directory");
  features->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  // fit
  FitSpec fit_spec;
  std::string data_path;
  auto* fit = app.add_subcommand("fit", "Fit a regression model to a CSV table");
  fit->add_option("--data", data_path, "Rows or scores CSV")->required();
  fit->add_option("--formula", fit_spec.formula, "Column recipe, e.g. \"produced ~ logp_forward + sem_dist\"")->required();
  fit->add_option("--kind", fit_spec.kind, "Model kind")->check(CLI::IsMember({"ols", "lmm_ri", "logistic"}));
  fit->add_option("--group", fit_spec.group, "Grouping column for lmm_ri");
  fit->add_option("--name", fit_spec.name, "Model name (output fit_<name>.json)")->required();
  fit->add_flag("--standardize", fit_spec.standardize, "z-score numeric predictors");
  fit->add_option("--bootstrap", fit_spec.bootstrap, "Bootstrap resamples (0 = none)");
  fit->add_option("--seed", seed, "Random seed");
  fit->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  fit->add_option("--out-dir", out_dir, "Output directory");

  // compare
  std::string small_path, big_path;
  bool as_json = false;
  auto* compare = app.add_subcommand("compare", "Likelihood-ratio test and BIC for nested fits");
  compare->add_option("small", small_path, "Fit JSON of the smaller model")->required();
  compare->add_option("big", big_path, "Fit JSON of the larger model")->required();
  compare->add_flag("--json", as_json, "JSON output");

  // simulate
  std::string config_path;
  auto* simulate = app.add_subcommand("simulate", "Synthetic corpus and substitution rows from a known policy");
  simulate->add_option("--config", config_path, "Simulation config JSON")->required();
  simulate->add_option("--out-dir", out_dir, "Output directory");
  simulate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  // selfcheck
  auto* check = app.add_subcommand("selfcheck", "Quick numerical self-test");

  // run
  std::string run_out;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> run_jobs;
  std::string run_backend;
  auto* run = app.add_subcommand("run", "Run the pipeline described by a config file");
  run->add_option("--config", config_path, "Pipeline config JSON")->required();
  run->add_option("--out-dir", run_out, "Override out_dir");
  run->add_option("--seed", run_seed, "Override seed");
  run->add_option("--jobs", run_jobs, "Override jobs");
  run->add_option("--backend", run_backend, "Override backend");

  // serve
  int port = -1;
  bool stdio = false;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Expose n-gram models over the scoring protocol");
  serve->add_option("--models", models, "Model directory")->required();
  serve->add_option("--port", port, "HTTP port (0 picks one)");
  serve->add_option("--host", host, "HTTP bind address");
  serve->add_flag("--stdio", stdio, "Line-delimited JSON on stdin/stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  LoadOptions load;
  load.strict = !lenient;
  load.lowercase = !keep_case;

  std::unique_ptr<OutputSet> outputs;
  try {
    if (*train) {
      stage = "train-ngram";
      const Corpus corpus = load_corpus(corpus_path, load);
      const Vocabulary vocab = build_vocab(corpus, min_count, speaker_tags);
      NGramOptions fo;
      fo.order = order;
      fo.alpha = alpha;
      fo.speaker_tags = speaker_tags;
      NGramOptions bo = fo;
      bo.direction = Direction::Backward;
      bo.speaker_tags = false;
      NGramOptions uo;
      uo.order = 1;
      uo.alpha = alpha;
      outputs = std::make_unique<OutputSet>(out_dir);
      std::ostringstream v, f, b, u;
      vocab.write(v);
      const NGramModel fwd = train_ngram(corpus, vocab, fo);
      fwd.save(f);
      train_ngram(corpus, vocab, bo).save(b);
      train_ngram(corpus, vocab, uo).save(u);
      outputs->write("vocab.txt", v.str());
      outputs->write("ngram_forward.json", f.str());
      outputs->write("ngram_backward.json", b.str());
      outputs->write("ngram_unigram.json", u.str());
      std::cerr << fmt::format("vocabulary {} words; training perplexity {:.4f}\n", vocab.size(), perplexity(fwd, corpus));
    } else if (*augment) {
      stage = "augment";
      const Corpus corpus = load_corpus(corpus_path, load);
      AugmentOptions ao;
      ao.swap_prob = swap_prob;
      ao.speaker_tags = speaker_tags;
      ao.samples_per_utterance = samples;
      std::ostringstream s;
      write_augmented(s, augment_corpus(corpus, seed, ao));
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("augmented.txt", s.str());
    } else if (*score) {
      stage = "score";
      const Corpus corpus = load_corpus(corpus_path, load);
      const Models m = load_models(models_dir(models, backend_spec));
      auto gw = open_gateway(backend_spec, m, average_orders);
      BatchOptions bo;
      bo.jobs = jobs;
      bo.speaker_tags = speaker_tags;
      BatchReport rep;
      const auto recs = batch_score_corpus(*gw, corpus, *m.unigram, bo, &rep);
      for (const auto& f : rep.failures) std::cerr << fmt::format("utterance {} failed: {}\n", f.utt_index, f.error);
      std::ostringstream s;
      write_scores_csv(s, recs);
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("scores.csv", s.str());
      std::cerr << fmt::format("{} tokens, {} backend call(s), {} failed utterance(s)\n", recs.size(),
                               gw->backend_calls(), rep.failures.size());
    } else if (*measures) {
      stage = "measures";
      std::ifstream in(scores_path);
      if (!in) throw Error("cannot open " + scores_path);
      const auto recs = read_records_csv(in);
      std::ostringstream s;
      write_scores_csv(s, recs);
      const char* names[] = {"logp_unigram", "logp_forward", "logp_backward", "logp_bidirectional",
                             "uncond_pmi", "cond_pmi", "rel_backward"};
      std::vector<std::vector<double>> cols(7);
      for (const auto& r : recs) {
        const MeasureSet ms = compute_measures(r);
        const double v[] = {ms.unigram, ms.forward, ms.backward, ms.bidirectional, ms.uncond_pmi, ms.cond_pmi, ms.rel_backward};
        for (int k = 0; k < 7; ++k) cols[k].push_back(v[k]);
      }
      nlohmann::ordered_json corr = nlohmann::ordered_json::object();
      for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
          try {
            corr[names[i]][names[j]] = pearson(cols[i], cols[j]);
          } catch (const ContractError&) {
            corr[names[i]][names[j]] = nullptr;
          }
        }
      }
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("measures.csv", s.str());
      outputs->write("correlations.json", corr.dump(2) + "\n");
    } else if (*extract) {
      stage = "extract-frames";
      const Corpus corpus = load_corpus(corpus_path, load);
      ExtractOptions eo;
      eo.categories.insert(categories.begin(), categories.end());
      ExtractReport rep;
      const auto frames = extract_frames(corpus, eo, &rep);
      std::ostringstream s;
      write_frames_jsonl(s, frames);
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("frames.jsonl", s.str());
      std::cerr << fmt::format("{} frame(s) from {} repair link(s)\n", frames.size(), rep.candidate_pairs);
      for (const auto& [reason, n] : rep.excluded) std::cerr << fmt::format("  excluded {}: {}\n", reason, n);
    } else if (*features) {
      stage = "features";
      std::ifstream fin(frames_path);
      if (!fin) throw Error("cannot open " + frames_path);
      const auto frames = read_frames_jsonl(fin);
      const Models m = load_models(models_dir(models, backend_spec));
      auto gw = open_gateway(backend_spec, m, false);
      std::optional<EmbeddingTable> emb;
      std::optional<PronLexicon> lex;
      std::optional<PhoneticFeatureTable> feats;
      if (!emb_path.empty()) emb = EmbeddingTable::load(emb_path);
      if (lex_path.empty() != feat_path.empty()) throw ContractError("--lexicon and --phonetic-features go together");
      if (!lex_path.empty()) {
        lex = PronLexicon::load(lex_path);
        feats = PhoneticFeatureTable::load(feat_path);
        lex->check_against(*feats);
      }
      AssembleContext ctx{gw.get(), m.unigram.get(), emb ? &*emb : nullptr, lex ? &*lex : nullptr,
                          feats ? &*feats : nullptr};
      AssembleOptions ao;
      ao.noise_var = noise_var;
      ao.seed = seed;
      ao.policy = policy == "skip" ? MissingPolicy::Skip : MissingPolicy::Strict;
      ao.negative_sample = negative_sample;
      AssembleReport rep;
      const auto rows = assemble_all(frames, ctx, ao, jobs, &rep);
      for (const auto& s : rep.skipped_frames) std::cerr << fmt::format("frame {} skipped: {}\n", s.frame_id, s.reason);
      std::ostringstream s;
      write_rows_csv(s, rows);
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("rows.csv", s.str());
    } else if (*fit) {
      stage = "fit";
      const csv::Table table = csv::read_file(data_path);
      if (fit_spec.kind == "lmm_ri" && fit_spec.group.empty()) throw ContractError("--group is required for lmm_ri");
      const FitOutput fo = fit_table(fit_spec, table, seed, jobs);
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("fit_" + fit_spec.name + ".json", fo.json);
      std::cout << fo.json;
    } else if (*compare) {
      stage = "compare";
      const FitResult small = fit_from_json(slurp(small_path));
      const FitResult big = fit_from_json(slurp(big_path));
      const auto rep = compare_fits(small, big, fs::path(small_path).stem().string(), fs::path(big_path).stem().string());
      std::cout << (as_json ? compare_to_json(rep) + "\n" : compare_to_text(rep));
    } else if (*simulate) {
      stage = "simulate";
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(slurp(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("$", std::string("invalid JSON: ") + e.what());
      }
      const SimulationConfig cfg = parse_simulation_config(j);
      if (cfg.provider != "gaussian") {
        throw SchemaError("$.provider.kind", "the simulate command supports the gaussian provider");
      }
      const Corpus corpus = generate_markov_corpus(cfg.n_utts, cfg.chain, cfg.seed);
      GaussianFeatureProvider provider(cfg.n_candidates, cfg.feature_means, cfg.feature_sds);
      SimulationOptions so;
      so.jobs = jobs;
      const auto res = simulate_substitutions(corpus, cfg.policy, provider, cfg.seed, so);
      std::ostringstream c, f, r;
      write_corpus(c, corpus);
      write_frames_jsonl(f, res.frames);
      write_rows_csv(r, res.rows);
      outputs = std::make_unique<OutputSet>(out_dir);
      outputs->write("corpus.jsonl", c.str());
      outputs->write("frames.jsonl", f.str());
      outputs->write("rows.csv", r.str());
      outputs->write("ground_truth.json", ground_truth_json(cfg, res) + "\n");
    } else if (*check) {
      stage = "selfcheck";
      bool all = true;
      for (const auto& c : selfcheck()) {
        std::cout << fmt::format("{} {} ({})\n", c.ok ? "PASS" : "FAIL", c.name, c.detail);
        all = all && c.ok;
      }
      return all ? 0 : 1;
    } else if (*run) {
      stage = "run";
      PipelineConfig cfg = load_pipeline_config(config_path);
      if (!run_out.empty()) cfg.out_dir = run_out;
      if (run_seed) cfg.seed = *run_seed;
      if (run_jobs) cfg.jobs = std::max<std::size_t>(1, *run_jobs);
      if (!run_backend.empty()) cfg.backend = run_backend;
      const auto summary = run_pipeline(cfg, std::cerr);
      std::cerr << fmt::format("wrote {} file(s) and manifest.json to {}\n", summary.outputs.size(), cfg.out_dir.lexically_normal().string());
    } else if (*serve) {
      stage = "serve";
      const Models m = load_models(models);
      NgramBackend backend(m.forward, m.backward);
      if (stdio) {
        wire::serve_stdio(backend, std::cin, std::cout);
      } else {
        if (port < 0) throw ContractError("give --port or --stdio");
        wire::HttpServer server(backend);
        const int bound = server.bind(host, port);
        std::cout << "listening on http://" << host << ":" << bound << std::endl;
        server.listen();
      }
    }
  } catch (const SchemaError& e) {
    if (outputs) outputs->remove_all();
    std::cerr << "ctxpred: config error at " << e.what() << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << "ctxpred: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    if (outputs) outputs->remove_all();
    std::cerr << "ctxpred: stage '" << stage << "' failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
