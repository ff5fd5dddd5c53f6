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

#include "ctxpred/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ctxpred/design.hpp"
#include "ctxpred/infill.hpp"
#include "ctxpred/measures.hpp"
#include "ctxpred/wire.hpp"

namespace ctxpred {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config ---

namespace {

// Typed access to one JSON object; remembers which keys were read so that
// unknown keys can be reported.
class Fields {
 public:
  Fields(const json& j, std::string path, bool strict) : j_(j), path_(std::move(path)), strict_(strict) {
    if (!j_.is_object()) throw SchemaError(path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }
  const json& raw(const std::string& key) { return (seen_.insert(key), j_.at(key)); }

  bool get(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    if (!j_[key].is_boolean()) throw SchemaError(at(key), "expected a boolean");
    return j_[key].get<bool>();
  }
  double get(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    if (!j_[key].is_number()) throw SchemaError(at(key), "expected a number");
    return j_[key].get<double>();
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    if (!j_[key].is_number_integer() || j_[key].get<std::int64_t>() < 0) {
      throw SchemaError(at(key), "expected a non-negative integer");
    }
    return j_[key].get<std::uint64_t>();
  }
  std::string str(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    if (!j_[key].is_string()) throw SchemaError(at(key), "expected a string");
    return j_[key].get<std::string>();
  }
  std::string required_str(const std::string& key) {
    if (!has(key)) throw SchemaError(at(key), "required field is missing");
    return str(key, "");
  }
  std::vector<std::string> strings(const std::string& key) {
    std::vector<std::string> out;
    if (!has(key)) return out;
    if (!j_[key].is_array()) throw SchemaError(at(key), "expected an array of strings");
    for (std::size_t i = 0; i < j_[key].size(); ++i) {
      if (!j_[key][i].is_string()) throw SchemaError(at(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(j_[key][i].get<std::string>());
    }
    return out;
  }

  void finish() const {
    if (!strict_) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw SchemaError(at(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  bool strict_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {"train-ngram", "augment", "score", "extract-frames",
                                                  "features",    "fit",     "compare"};
  return stages;
}

PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw SchemaError("$", "expected an object");
  PipelineConfig cfg;
  if (j.contains("strict") && !j["strict"].is_boolean()) throw SchemaError("$.strict", "expected a boolean");
  cfg.strict = j.value("strict", true);
  Fields top(j, "$", cfg.strict);
  top.has("strict");
  cfg.corpus = resolve(base_dir, top.required_str("corpus"));
  cfg.out_dir = resolve(base_dir, top.str("out_dir", "out"));
  cfg.seed = top.count("seed", 0);
  cfg.jobs = std::max<std::uint64_t>(1, top.count("jobs", 1));
  cfg.stages = top.strings("stages");
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& all = pipeline_stages();
    if (std::find(all.begin(), all.end(), cfg.stages[i]) == all.end()) {
      throw SchemaError(fmt::format("$.stages[{}]", i), "unknown stage '" + cfg.stages[i] + "'");
    }
  }

  if (top.has("load")) {
    Fields f(top.raw("load"), top.at("load"), cfg.strict);
    cfg.load.strict = f.get("strict", true);
    cfg.load.lowercase = f.get("lowercase", true);
    f.finish();
  }
  if (top.has("ngram")) {
    Fields f(top.raw("ngram"), top.at("ngram"), cfg.strict);
    const auto order = f.count("order", 2);
    if (order < 1 || order > 10) throw SchemaError(f.at("order"), "must be between 1 and 10");
    cfg.ngram.order = static_cast<int>(order);
    cfg.ngram.alpha = f.get("alpha", 1.0);
    if (!(cfg.ngram.alpha > 0)) throw SchemaError(f.at("alpha"), "must be > 0");
    const auto mc = f.count("min_count", 1);
    if (mc < 1) throw SchemaError(f.at("min_count"), "must be >= 1");
    cfg.min_count = static_cast<int>(mc);
    cfg.ngram.speaker_tags = f.get("speaker_tags", false);
    f.finish();
  }
  if (top.has("backend")) {
    const json& b = top.raw("backend");
    if (b.is_string()) {
      cfg.backend = b.get<std::string>();
    } else {
      Fields f(b, top.at("backend"), cfg.strict);
      cfg.backend = f.str("spec", "ngram");
      cfg.average_orders = f.get("average_orders", false);
      cfg.cache_dir = resolve(base_dir, f.str("cache_dir", ""));
      f.finish();
    }
    const auto& s = cfg.backend;
    if (s != "ngram" && s.rfind("ngram:", 0) != 0 && s.rfind("http:", 0) != 0 && s.rfind("stdio:", 0) != 0) {
      throw SchemaError("$.backend", "expected ngram, ngram:<dir>, http:<url> or stdio:<cmd>");
    }
    if (s.rfind("ngram:", 0) == 0) cfg.backend = "ngram:" + resolve(base_dir, s.substr(6)).string();
  }
  if (top.has("augment")) {
    Fields f(top.raw("augment"), top.at("augment"), cfg.strict);
    cfg.augment = f.get("enabled", true);
    cfg.swap_prob = f.get("swap_prob", 0.5);
    if (!(cfg.swap_prob >= 0 && cfg.swap_prob <= 1)) throw SchemaError(f.at("swap_prob"), "must be in [0, 1]");
    cfg.samples_per_utterance = f.count("samples_per_utterance", 1);
    if (cfg.samples_per_utterance < 1) throw SchemaError(f.at("samples_per_utterance"), "must be >= 1");
    f.finish();
  }
  if (top.has("frames")) {
    Fields f(top.raw("frames"), top.at("frames"), cfg.strict);
    cfg.categories = f.strings("categories");
    for (std::size_t i = 0; i < cfg.categories.size(); ++i) {
      if (!is_error_category(cfg.categories[i])) {
        throw SchemaError(fmt::format("{}[{}]", f.at("categories"), i),
                          "expected semantic, phonological, mixed or morphosyntactic");
      }
    }
    f.finish();
  }
  if (top.has("features")) {
    Fields f(top.raw("features"), top.at("features"), cfg.strict);
    cfg.embeddings = resolve(base_dir, f.str("embeddings", ""));
    cfg.lexicon = resolve(base_dir, f.str("lexicon", ""));
    cfg.phonetic_features = resolve(base_dir, f.str("phonetic_features", ""));
    cfg.noise_var = f.get("noise_var", 0.0);
    if (!(cfg.noise_var >= 0)) throw SchemaError(f.at("noise_var"), "must be >= 0");
    cfg.phonetic_noise = f.get("phonetic_noise", true);
    const auto policy = f.str("policy", "skip");
    if (policy != "skip" && policy != "strict") throw SchemaError(f.at("policy"), "expected \"skip\" or \"strict\"");
    cfg.policy = policy == "skip" ? MissingPolicy::Skip : MissingPolicy::Strict;
    cfg.negative_sample = f.count("negative_sample", 0);
    if (cfg.lexicon.empty() != cfg.phonetic_features.empty()) {
      throw SchemaError(f.at("lexicon"), "lexicon and phonetic_features must be given together");
    }
    f.finish();
  }
  if (top.has("fit")) {
    const json& arr = top.raw("fit");
    if (!arr.is_array()) throw SchemaError("$.fit", "expected an array of model specs");
    std::set<std::string> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Fields f(arr[i], fmt::format("$.fit[{}]", i), cfg.strict);
      FitSpec s;
      s.name = f.required_str("name");
      if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos) {
        throw SchemaError(f.at("name"), "must be a non-empty name without spaces or slashes");
      }
      if (!names.insert(s.name).second) throw SchemaError(f.at("name"), "duplicate model name '" + s.name + "'");
      s.kind = f.str("kind", "logistic");
      if (s.kind != "ols" && s.kind != "lmm_ri" && s.kind != "logistic") {
        throw SchemaError(f.at("kind"), "expected ols, lmm_ri or logistic");
      }
      s.formula = f.required_str("formula");
      if (s.formula.find('~') == std::string::npos) throw SchemaError(f.at("formula"), "expected \"response ~ terms\"");
      s.data = f.str("data", "rows");
      if (s.data != "rows" && s.data != "scores") throw SchemaError(f.at("data"), "expected \"rows\" or \"scores\"");
      s.group = f.str("group", "");
      if (s.kind == "lmm_ri" && s.group.empty()) throw SchemaError(f.at("group"), "required for lmm_ri");
      s.standardize = f.get("standardize", false);
      s.bootstrap = f.count("bootstrap", 0);
      f.finish();
      cfg.fits.push_back(std::move(s));
    }
  }
  if (top.has("compare")) {
    const json& arr = top.raw("compare");
    if (!arr.is_array()) throw SchemaError("$.compare", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Fields f(arr[i], fmt::format("$.compare[{}]", i), cfg.strict);
      CompareSpec c{f.required_str("small"), f.required_str("big")};
      for (const auto* name : {&c.small, &c.big}) {
        const bool known = std::any_of(cfg.fits.begin(), cfg.fits.end(), [&](const FitSpec& s) { return s.name == *name; });
        if (!known) throw SchemaError(f.at(name == &c.small ? "small" : "big"), "no fit named '" + *name + "'");
      }
      f.finish();
      cfg.compares.push_back(std::move(c));
    }
  }
  top.finish();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("$", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_pipeline_config(j, path.parent_path());
}

// --- backends ---

std::shared_ptr<Backend> make_backend(const std::string& spec, const Vocabulary* vocab) {
  if (spec.rfind("ngram:", 0) == 0) {
    const fs::path dir = spec.substr(6);
    auto fwd = std::make_shared<NGramModel>(NGramModel::load_file((dir / "ngram_forward.json").string()));
    std::shared_ptr<NGramModel> bwd;
    if (fs::exists(dir / "ngram_backward.json")) {
      bwd = std::make_shared<NGramModel>(NGramModel::load_file((dir / "ngram_backward.json").string()));
    }
    return std::make_shared<NgramBackend>(fwd, bwd);
  }
  const bool http = spec.rfind("http:", 0) == 0;
  const bool stdio = spec.rfind("stdio:", 0) == 0;
  if (!http && !stdio) throw ContractError("backend must be ngram:<dir>, http:<url> or stdio:<cmd>, got '" + spec + "'");
  if (!vocab) throw ContractError("wire backend needs the shared vocabulary");
  if (http) return std::make_shared<wire::HttpBackend>(spec, *vocab);
  return std::make_shared<wire::StdioBackend>(spec.substr(6), *vocab);
}

// --- outputs ---

OutputSet::OutputSet(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void OutputSet::write(const std::string& name, const std::string& content) {
  const fs::path final_path = dir_ / name;
  const fs::path tmp = dir_ / (name + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error("write failed for " + final_path.string());
    }
  }
  fs::rename(tmp, final_path);
  if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
}

void OutputSet::remove_all() {
  std::error_code ec;
  for (const auto& n : names_) {
    fs::remove(dir_ / n, ec);
    fs::remove(dir_ / (n + ".partial"), ec);
  }
  fs::remove(dir_ / "manifest.json", ec);
  names_.clear();
}

void OutputSet::write_manifest(const json& extra) {
  std::vector<std::string> sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& n : sorted) {
    nlohmann::ordered_json f;
    f["path"] = n;
    f["sha256"] = sha256_file((dir_ / n).string());
    f["bytes"] = fs::file_size(dir_ / n);
    files.push_back(std::move(f));
  }
  nlohmann::ordered_json m;
  m["format"] = "ctxpred-manifest";
  m["version"] = 1;
  for (const auto& [k, v] : extra.items()) m[k] = v;
  m["files"] = std::move(files);
  const fs::path tmp = dir_ / "manifest.json.partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << m.dump(2) << '\n';
  }
  fs::rename(tmp, dir_ / "manifest.json");
}

// --- fitting ---

FitOutput fit_table(const FitSpec& spec, const csv::Table& data, std::uint64_t seed, std::size_t jobs) {
  DesignOptions dopts;
  dopts.standardize = spec.standardize;
  const Design d = build_design(data, spec.formula, dopts);

  Fitter fitter;
  std::vector<std::size_t> groups;
  if (spec.kind == "lmm_ri") groups = group_ids(data, spec.group);

  FitOutput out;
  if (spec.kind == "ols") {
    fitter = [&](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) { return fit_ols(X, y, d.columns); };
    out.fit = fitter(d.X, d.y);
  } else if (spec.kind == "lmm_ri") {
    out.fit = fit_lmm_random_intercept(d.X, d.y, groups, d.columns);
  } else {
    out.fit = fit_logistic(d.X, d.y, d.columns);
    LogisticOptions warm;
    warm.start = out.fit.coefficients;
    fitter = [&, warm](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) { return fit_logistic(X, y, d.columns, warm); };
  }
  out.fit.formula = spec.formula;
  out.fit.standardization = d.standardization;

  if (spec.bootstrap > 0) {
    if (spec.kind == "lmm_ri") throw ContractError("bootstrap is not supported for lmm_ri fits");
    BootstrapOptions bo;
    bo.n_sims = spec.bootstrap;
    bo.seed = seed;
    bo.jobs = jobs;
    if (data.has_column("frame_id")) bo.clusters = group_ids(data, "frame_id");
    out.bootstrap = bootstrap_ci(fitter, d.X, d.y, bo);
    nlohmann::ordered_json intervals = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < d.columns.size(); ++i) {
      intervals[d.columns[i]] = {out.bootstrap->intervals[i].lo, out.bootstrap->intervals[i].hi};
    }
    nlohmann::ordered_json b;
    b["n_sims"] = bo.n_sims;
    b["level"] = bo.level;
    b["resampling"] = bo.clusters ? "frame" : "row";
    b["successes"] = out.bootstrap->successes;
    b["coverage_warning"] = out.bootstrap->coverage_warning;
    b["intervals"] = std::move(intervals);
    auto oj = nlohmann::ordered_json::parse(fit_to_json(out.fit));
    oj["extras"]["bootstrap"] = std::move(b);
    out.json = oj.dump(2);
  } else {
    out.json = nlohmann::ordered_json::parse(fit_to_json(out.fit)).dump(2);
  }
  out.json += '\n';
  return out;
}

// --- run ---

namespace {

struct RunState {
  std::optional<Corpus> corpus;
  std::shared_ptr<const NGramModel> forward, backward, unigram;
  std::optional<std::vector<SubstitutionFrame>> frames;
  std::map<std::string, FitResult> fits;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("missing input " + p.string() + " (run the stage that produces it first)");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  OutputSet out(cfg.out_dir);
  RunState st;
  RunSummary summary;

  std::vector<std::string> stages = cfg.stages;
  if (stages.empty()) {
    stages = {"train-ngram"};
    if (cfg.augment) stages.push_back("augment");
    stages.insert(stages.end(), {"score", "extract-frames", "features"});
    if (!cfg.fits.empty()) stages.push_back("fit");
    if (!cfg.compares.empty()) stages.push_back("compare");
  }

  auto corpus = [&]() -> const Corpus& {
    if (!st.corpus) {
      LoadReport rep;
      st.corpus = load_corpus(cfg.corpus, cfg.load, &rep);
      if (rep.skipped) log << fmt::format("  skipped {} malformed corpus line(s)\n", rep.skipped);
    }
    return *st.corpus;
  };
  auto models = [&] {
    if (!st.forward) {
      st.forward = std::make_shared<NGramModel>(NGramModel::load_file(out.path("ngram_forward.json").string()));
      st.backward = std::make_shared<NGramModel>(NGramModel::load_file(out.path("ngram_backward.json").string()));
      st.unigram = std::make_shared<NGramModel>(NGramModel::load_file(out.path("ngram_unigram.json").string()));
    }
  };
  auto gateway = [&]() -> std::unique_ptr<Gateway> {
    std::shared_ptr<Backend> backend;
    if (cfg.backend == "ngram") {
      models();
      backend = std::make_shared<NgramBackend>(st.forward, st.backward);
    } else {
      const Vocabulary* vocab = nullptr;
      if (cfg.backend.rfind("ngram:", 0) != 0) {
        models();
        vocab = &st.forward->vocab();
      }
      backend = make_backend(cfg.backend, vocab);
    }
    GatewayOptions g;
    g.average_orders = cfg.average_orders;
    g.cache_dir = cfg.cache_dir;
    if (g.cache_dir.empty()) {
      if (const char* env = std::getenv("CTXPRED_CACHE_DIR"); env && *env) g.cache_dir = env;
    }
    return std::make_unique<Gateway>(backend, g);
  };

  for (const auto& stage : stages) {
    log << "[" << stage << "]\n";
    try {
      if (stage == "train-ngram") {
        const Corpus& c = corpus();
        const Vocabulary vocab = build_vocab(c, cfg.min_count, cfg.ngram.speaker_tags);
        NGramOptions fo = cfg.ngram;
        NGramOptions bo = cfg.ngram;
        bo.direction = Direction::Backward;
        bo.speaker_tags = false;
        NGramOptions uo;
        uo.order = 1;
        uo.alpha = cfg.ngram.alpha;
        st.forward = std::make_shared<NGramModel>(train_ngram(c, vocab, fo));
        st.backward = std::make_shared<NGramModel>(train_ngram(c, vocab, bo));
        st.unigram = std::make_shared<NGramModel>(train_ngram(c, vocab, uo));
        std::ostringstream v, f, b, u;
        vocab.write(v);
        st.forward->save(f);
        st.backward->save(b);
        st.unigram->save(u);
        out.write("vocab.txt", v.str());
        out.write("ngram_forward.json", f.str());
        out.write("ngram_backward.json", b.str());
        out.write("ngram_unigram.json", u.str());
        log << fmt::format("  vocabulary {} words, perplexity {:.4f}\n", vocab.size(), perplexity(*st.forward, c));
      } else if (stage == "augment") {
        AugmentOptions ao;
        ao.swap_prob = cfg.swap_prob;
        ao.speaker_tags = cfg.ngram.speaker_tags;
        ao.samples_per_utterance = cfg.samples_per_utterance;
        AugmentReport rep;
        const auto recs = augment_corpus(corpus(), cfg.seed, ao, &rep);
        std::ostringstream s;
        write_augmented(s, recs);
        out.write("augmented.txt", s.str());
        log << fmt::format("  {} records, {} empty utterance(s) skipped\n", recs.size(), rep.skipped_empty);
      } else if (stage == "score") {
        models();
        auto gw = gateway();
        BatchOptions bo;
        bo.jobs = cfg.jobs;
        bo.speaker_tags = cfg.ngram.speaker_tags;
        BatchReport rep;
        const auto recs = batch_score_corpus(*gw, corpus(), *st.unigram, bo, &rep);
        for (const auto& f : rep.failures) log << fmt::format("  utterance {} failed: {}\n", f.utt_index, f.error);
        std::ostringstream s;
        write_scores_csv(s, recs);
        out.write("scores.csv", s.str());
        log << fmt::format("  {} tokens scored, {} backend call(s)\n", recs.size(), gw->backend_calls());
      } else if (stage == "extract-frames") {
        ExtractOptions eo;
        eo.categories.insert(cfg.categories.begin(), cfg.categories.end());
        ExtractReport rep;
        st.frames = extract_frames(corpus(), eo, &rep);
        std::ostringstream s;
        write_frames_jsonl(s, *st.frames);
        out.write("frames.jsonl", s.str());
        nlohmann::ordered_json r;
        r["candidate_pairs"] = rep.candidate_pairs;
        r["frames"] = st.frames->size();
        r["excluded"] = rep.excluded;
        out.write("frames_report.json", r.dump(2) + "\n");
        log << fmt::format("  {} frame(s) from {} repair link(s)\n", st.frames->size(), rep.candidate_pairs);
      } else if (stage == "features") {
        models();
        if (!st.frames) {
          std::istringstream in(read_text(out.path("frames.jsonl")));
          st.frames = read_frames_jsonl(in);
        }
        std::optional<EmbeddingTable> emb;
        std::optional<PronLexicon> lex;
        std::optional<PhoneticFeatureTable> feats;
        if (!cfg.embeddings.empty()) emb = EmbeddingTable::load(cfg.embeddings);
        if (!cfg.lexicon.empty()) {
          lex = PronLexicon::load(cfg.lexicon);
          feats = PhoneticFeatureTable::load(cfg.phonetic_features);
          lex->check_against(*feats);
        }
        auto gw = gateway();
        AssembleContext ctx{gw.get(), st.unigram.get(), emb ? &*emb : nullptr, lex ? &*lex : nullptr,
                            feats ? &*feats : nullptr};
        AssembleOptions ao;
        ao.noise_var = cfg.noise_var;
        ao.phonetic_noise = cfg.phonetic_noise;
        ao.seed = cfg.seed;
        ao.policy = cfg.policy;
        ao.negative_sample = cfg.negative_sample;
        AssembleReport rep;
        const auto rows = assemble_all(*st.frames, ctx, ao, cfg.jobs, &rep);
        for (const auto& s : rep.skipped_frames) log << fmt::format("  frame {} skipped: {}\n", s.frame_id, s.reason);
        std::ostringstream s;
        write_rows_csv(s, rows);
        out.write("rows.csv", s.str());
        log << fmt::format("  {} row(s), {} dropped\n", rows.size(), rep.dropped_rows);
      } else if (stage == "fit") {
        std::map<std::string, csv::Table> tables;
        for (const auto& spec : cfg.fits) {
          const std::string file = spec.data == "rows" ? "rows.csv" : "scores.csv";
          if (!tables.count(file)) {
            std::istringstream in(read_text(out.path(file)));
            tables[file] = csv::read(in);
          }
          const FitOutput fo = fit_table(spec, tables[file], cfg.seed, cfg.jobs);
          st.fits[spec.name] = fo.fit;
          out.write("fit_" + spec.name + ".json", fo.json);
          log << fmt::format("  {}: loglik {:.4f}, {} parameter(s){}\n", spec.name, fo.fit.loglik, fo.fit.n_params,
                             fo.fit.converged ? "" : " (not converged)");
        }
      } else if (stage == "compare") {
        nlohmann::ordered_json all = nlohmann::ordered_json::array();
        std::string text;
        for (const auto& c : cfg.compares) {
          for (const auto* name : {&c.small, &c.big}) {
            if (!st.fits.count(*name)) st.fits[*name] = fit_from_json(read_text(out.path("fit_" + *name + ".json")));
          }
          const auto rep = compare_fits(st.fits.at(c.small), st.fits.at(c.big), c.small, c.big);
          all.push_back(nlohmann::ordered_json::parse(compare_to_json(rep)));
          text += compare_to_text(rep);
        }
        out.write("compare.json", all.dump(2) + "\n");
        out.write("compare.txt", text);
        log << text;
      }
      summary.stages_run.push_back(stage);
    } catch (const std::exception& e) {
      out.remove_all();
      throw StageError(stage, e.what());
    }
  }

  nlohmann::ordered_json extra;
  extra["seed"] = cfg.seed;
  extra["stages"] = summary.stages_run;
  out.write_manifest(extra);
  summary.outputs = out.names();
  return summary;
}

}  // namespace ctxpred
