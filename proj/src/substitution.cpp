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

#include "ctxpred/substitution.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <boost/random/uniform_int_distribution.hpp>
#include <nlohmann/json.hpp>

#include "ctxpred/csv.hpp"
#include "ctxpred/measures.hpp"

namespace ctxpred {

using nlohmann::json;

std::vector<std::string> SubstitutionFrame::fluent() const {
  std::vector<std::string> out(pre_context);
  out.push_back(repair);
  out.insert(out.end(), post_context.begin(), post_context.end());
  return out;
}

bool is_error_category(const std::string& c) {
  return std::find(std::begin(kErrorCategories), std::end(kErrorCategories), c) != std::end(kErrorCategories);
}

namespace {

struct Link {
  std::size_t reparandum;  // region index
  std::size_t repair;
};

bool spans_equal(const std::vector<std::string>& toks, std::size_t a, std::size_t b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (toks[a + i] != toks[b + i]) return false;
  }
  return true;
}

// Tokens between reparandum and repair that restate the words right before
// the reparandum.
bool is_retrace(const Utterance& u, const DisfluencyRegion& rep, const DisfluencyRegion& fix) {
  const std::size_t gap = fix.start - rep.end;
  return gap > 0 && gap <= rep.start && spans_equal(u.tokens, rep.start - gap, rep.end, gap);
}

}  // namespace

std::vector<SubstitutionFrame> extract_frames(const Corpus& corpus, const ExtractOptions& opts,
                                              ExtractReport* report) {
  ExtractReport local;
  ExtractReport& rep = report ? *report : local;
  std::vector<SubstitutionFrame> frames;

  for (std::size_t ui = 0; ui < corpus.utterances.size(); ++ui) {
    const Utterance& u = corpus.utterances[ui];
    const auto& regions = u.disfluencies;
    if (regions.empty()) continue;

    std::vector<Link> links;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      if (regions[i].kind == DisfluencyKind::Repair && regions[i].repair_of) {
        links.push_back({*regions[i].repair_of, i});
      }
    }

    // Token kind map: which positions are covered by which region kind.
    std::vector<int> cover(u.tokens.size(), -1);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      for (std::size_t t = regions[i].start; t < regions[i].end; ++t) cover[t] = static_cast<int>(i);
    }

    std::vector<bool> drop(u.tokens.size(), false);
    for (const auto& r : regions) {
      if (r.kind != DisfluencyKind::Repair) {
        for (std::size_t t = r.start; t < r.end; ++t) drop[t] = true;
      }
    }
    for (const auto& l : links) {
      const auto& R = regions[l.reparandum];
      const auto& P = regions[l.repair];
      if (P.start > R.end && is_retrace(u, R, P)) {
        for (std::size_t t = R.end; t < P.start; ++t) drop[t] = true;
      }
    }

    for (const auto& l : links) {
      const auto& R = regions[l.reparandum];
      const auto& P = regions[l.repair];
      ++rep.candidate_pairs;
      if (R.end - R.start != 1 || P.end - P.start != 1) {
        ++rep.excluded["unequal_length"];
        continue;
      }
      if (P.start < R.end) {
        ++rep.excluded["intervening_material"];
        continue;
      }
      bool clean_gap = true;
      for (std::size_t t = R.end; t < P.start; ++t) {
        const int c = cover[t];
        const bool pause = c >= 0 && (regions[c].kind == DisfluencyKind::Filler ||
                                      regions[c].kind == DisfluencyKind::Repetition);
        if (!pause) clean_gap = false;
      }
      if (!clean_gap && !is_retrace(u, R, P)) {
        ++rep.excluded["intervening_material"];
        continue;
      }
      if (!u.pos) {
        ++rep.excluded["missing_pos"];
        continue;
      }
      const std::string& pos_err = (*u.pos)[R.start];
      if (pos_err != (*u.pos)[P.start]) {
        ++rep.excluded["pos_mismatch"];
        continue;
      }
      const std::string& err = u.tokens[R.start];
      const std::string& fix = u.tokens[P.start];
      if (err == fix) {
        ++rep.excluded["identical_words"];
        continue;
      }
      if (!opts.categories.empty() && (!P.category || !opts.categories.count(*P.category))) {
        ++rep.excluded["category_filtered"];
        continue;
      }

      SubstitutionFrame f;
      f.frame_id = frames.size();
      f.conversation_id = u.conversation_id;
      f.utt_index = ui;
      for (std::size_t t = 0; t < R.start; ++t) {
        if (!drop[t]) f.pre_context.push_back(u.tokens[t]);
      }
      for (std::size_t t = P.end; t < u.tokens.size(); ++t) {
        if (!drop[t]) f.post_context.push_back(u.tokens[t]);
      }
      f.error = err;
      f.repair = fix;
      f.pos = pos_err;
      f.category = P.category;
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

void write_frames_jsonl(std::ostream& out, const std::vector<SubstitutionFrame>& frames) {
  for (const auto& f : frames) {
    nlohmann::ordered_json j;
    j["frame_id"] = f.frame_id;
    j["conversation_id"] = f.conversation_id;
    j["utt_index"] = f.utt_index;
    j["pre_context"] = f.pre_context;
    j["error"] = f.error;
    j["repair"] = f.repair;
    j["post_context"] = f.post_context;
    j["pos"] = f.pos;
    if (f.category) j["category"] = *f.category;
    out << j.dump() << '\n';
  }
}

std::vector<SubstitutionFrame> read_frames_jsonl(std::istream& in) {
  std::vector<SubstitutionFrame> frames;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      SubstitutionFrame f;
      f.frame_id = j.at("frame_id").get<std::size_t>();
      f.conversation_id = j.value("conversation_id", "");
      f.utt_index = j.value("utt_index", std::size_t{0});
      f.pre_context = j.at("pre_context").get<std::vector<std::string>>();
      f.post_context = j.at("post_context").get<std::vector<std::string>>();
      f.error = j.at("error").get<std::string>();
      f.repair = j.at("repair").get<std::string>();
      f.pos = j.value("pos", "");
      if (j.contains("category")) f.category = j["category"].get<std::string>();
      frames.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw ParseError(std::string("frames: ") + e.what(), lineno);
    }
  }
  return frames;
}

// --- lexical class and category heuristic ---

namespace {

const std::unordered_set<std::string>& function_words() {
  static const std::unordered_set<std::string> words = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
      "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
      "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either",
      "every", "few", "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers",
      "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
      "itself", "may", "me", "might", "mine", "more", "most", "must", "my", "myself", "neither",
      "no", "nor", "not", "of", "off", "on", "once", "one", "only", "or", "other", "our", "ours",
      "ourselves", "out", "over", "own", "same", "shall", "she", "should", "so", "some", "such",
      "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
      "they", "this", "those", "through", "to", "too", "under", "until", "up", "upon", "us", "very",
      "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who", "whom",
      "whose", "why", "will", "with", "would", "you", "your", "yours", "yourself", "yourselves"};
  return words;
}

std::size_t common_prefix(const std::string& a, const std::string& b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

}  // namespace

std::string_view to_string(LexicalClass c) { return c == LexicalClass::Function ? "function" : "content"; }

LexicalClass lexical_class(const std::string& word) {
  return function_words().count(word) ? LexicalClass::Function : LexicalClass::Content;
}

std::string heuristic_category(const std::string& error, const std::string& repair, const PronLexicon* lexicon) {
  const std::size_t shorter = std::min(error.size(), repair.size());
  const std::size_t prefix = common_prefix(error, repair);
  if (shorter >= 3 && (prefix == shorter || prefix >= std::max<std::size_t>(4, shorter - 3))) {
    return "morphosyntactic";
  }
  const std::vector<std::string>* pe = lexicon ? lexicon->find(error) : nullptr;
  const std::vector<std::string>* pr = lexicon ? lexicon->find(repair) : nullptr;
  if (pe && pr) {
    if (pe->front() == pr->front() || pe->back() == pr->back()) return "phonological";
  } else if (!error.empty() && !repair.empty()) {
    if (error.front() == repair.front() || error.back() == repair.back()) return "phonological";
  }
  return "semantic";
}

// --- rows ---

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "logp_unigram", "logp_forward", "logp_backward", "logp_bidirectional", "uncond_pmi",
      "cond_pmi",     "rel_backward", "sem_dist",      "phon_dist"};
  return names;
}

double FeatureRow::feature(const std::string& name) const {
  if (name == "logp_unigram" || name == "unigram") return logp_unigram;
  if (name == "logp_forward" || name == "forward") return logp_forward;
  if (name == "logp_backward" || name == "backward") return logp_backward;
  if (name == "logp_bidirectional" || name == "bidirectional") return logp_bidirectional;
  if (name == "uncond_pmi") return uncond_pmi;
  if (name == "cond_pmi") return cond_pmi;
  if (name == "rel_backward") return rel_backward;
  if (name == "sem_dist") return sem_dist;
  if (name == "phon_dist") return phon_dist;
  if (name == "produced") return produced;
  throw ContractError("unknown feature '" + name + "'");
}

namespace {

void missing(MissingPolicy policy, const std::string& what) {
  if (policy == MissingPolicy::Strict) throw ContractError(what);
}

}  // namespace

std::vector<FeatureRow> assemble_rows(const SubstitutionFrame& frame, const AssembleContext& ctx,
                                      const AssembleOptions& opts, AssembleReport* report) {
  if (!ctx.gateway || !ctx.unigram) throw ContractError("assemble_rows: gateway and unigram model are required");
  if (!(opts.noise_var >= 0.0)) throw ContractError("assemble_rows: noise variance must be >= 0");
  const bool semantic = ctx.embeddings != nullptr;
  const bool phonetic = ctx.lexicon != nullptr && ctx.features != nullptr;
  const Vocabulary& vocab = ctx.gateway->backend().vocab();

  auto skip = [&](const std::string& reason) -> std::vector<FeatureRow> {
    if (opts.policy == MissingPolicy::Strict) throw ContractError("frame " + std::to_string(frame.frame_id) + ": " + reason);
    if (report) report->skipped_frames.push_back({frame.frame_id, reason});
    return {};
  };

  const auto err_id = vocab.find(frame.error);
  const auto fix_id = vocab.find(frame.repair);
  if (!err_id || vocab.is_special(*err_id)) return skip("error '" + frame.error + "' not in vocabulary");
  if (!fix_id || vocab.is_special(*fix_id)) return skip("repair '" + frame.repair + "' not in vocabulary");

  // Noisy targets, one per frame.
  Rng rng = stream_rng(opts.seed, frame.frame_id);
  std::vector<double> sem_target;
  FeatureMatrix phon_target;
  if (semantic) {
    const auto* v = ctx.embeddings->find(frame.repair);
    if (!v) return skip("repair '" + frame.repair + "' has no embedding");
    sem_target = noisy_semantic_target(*v, opts.noise_var, rng);
  }
  if (phonetic) {
    const auto* segs = ctx.lexicon->find(frame.repair);
    if (!segs) return skip("repair '" + frame.repair + "' has no pronunciation");
    phon_target = opts.phonetic_noise ? noisy_phonetic_target(*segs, *ctx.features, rng)
                                      : ctx.features->matrix(*segs);
  }

  std::vector<std::string> cands;
  for (WordId id : vocab.content_ids()) cands.push_back(vocab.word(id));
  if (opts.negative_sample > 0) {
    std::vector<std::string> negatives;
    for (auto& c : cands) {
      if (c != frame.error && c != frame.repair) negatives.push_back(c);
    }
    if (opts.negative_sample < negatives.size()) {
      Rng srng = stream_rng(splitmix64(opts.seed ^ 0x5ab5a3b1e5ULL), frame.frame_id);
      for (std::size_t i = 0; i < opts.negative_sample; ++i) {
        boost::random::uniform_int_distribution<std::size_t> pick(i, negatives.size() - 1);
        std::swap(negatives[i], negatives[pick(srng)]);
      }
      negatives.resize(opts.negative_sample);
      std::unordered_set<std::string> keep(negatives.begin(), negatives.end());
      keep.insert(frame.error);
      keep.insert(frame.repair);
      std::erase_if(cands, [&](const std::string& c) { return !keep.count(c); });
    }
  }

  const Scores fwd = ctx.gateway->score_forward(frame.pre_context, cands);
  const Scores bwd = ctx.gateway->score_backward(frame.post_context, cands);
  const Scores inf = ctx.gateway->score_infill(frame.pre_context, frame.post_context, cands);
  const Vocabulary& uv = ctx.unigram->vocab();

  std::vector<FeatureRow> rows;
  rows.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const std::string& c = cands[i];
    FeatureRow r;
    r.frame_id = frame.frame_id;
    r.candidate = c;
    r.produced = c == frame.error ? 1 : 0;
    r.lexical_class = lexical_class(c);
    if (semantic) {
      const auto* v = ctx.embeddings->find(c);
      if (!v) {
        missing(opts.policy, "candidate '" + c + "' has no embedding");
        if (r.produced) return skip("error '" + c + "' has no embedding");
        if (report) ++report->dropped_rows;
        continue;
      }
      r.sem_dist = semantic_distance(*v, sem_target);
    }
    if (phonetic) {
      const auto* segs = ctx.lexicon->find(c);
      if (!segs) {
        missing(opts.policy, "candidate '" + c + "' has no pronunciation");
        if (r.produced) return skip("error '" + c + "' has no pronunciation");
        if (report) ++report->dropped_rows;
        continue;
      }
      r.phon_dist = phonetic_distance(ctx.features->matrix(*segs), phon_target);
    }
    r.logp_unigram = ctx.unigram->cond_logprob(uv.id(c), {});
    r.logp_forward = fwd.logprobs[i];
    r.logp_backward = bwd.logprobs[i];
    r.logp_bidirectional = inf.logprobs[i];
    const MeasureSet m = compute_measures(r.logp_unigram, r.logp_forward, r.logp_backward, r.logp_bidirectional);
    r.uncond_pmi = m.uncond_pmi;
    r.cond_pmi = m.cond_pmi;
    r.rel_backward = m.rel_backward;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<FeatureRow> assemble_all(const std::vector<SubstitutionFrame>& frames, const AssembleContext& ctx,
                                     const AssembleOptions& opts, std::size_t jobs, AssembleReport* report) {
  std::vector<std::vector<FeatureRow>> per(frames.size());
  std::vector<AssembleReport> reports(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) { per[i] = assemble_rows(frames[i], ctx, opts, &reports[i]); });
  std::vector<FeatureRow> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.insert(out.end(), std::make_move_iterator(per[i].begin()), std::make_move_iterator(per[i].end()));
    if (report) {
      report->dropped_rows += reports[i].dropped_rows;
      report->skipped_frames.insert(report->skipped_frames.end(), reports[i].skipped_frames.begin(),
                                    reports[i].skipped_frames.end());
    }
  }
  return out;
}

const std::vector<std::string>& feature_row_header() {
  static const std::vector<std::string> header = {
      "frame_id",     "candidate",  "produced",   "lexical_class", "logp_unigram",
      "logp_forward", "logp_backward", "logp_bidirectional", "uncond_pmi", "cond_pmi",
      "rel_backward", "sem_dist",   "phon_dist"};
  return header;
}

void write_rows_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
  csv::write_row(out, feature_row_header());
  for (const auto& r : rows) {
    csv::write_row(out, {std::to_string(r.frame_id), r.candidate, std::to_string(r.produced),
                         r.lexical_class ? std::string(to_string(*r.lexical_class)) : std::string(),
                         format_double(r.logp_unigram), format_double(r.logp_forward),
                         format_double(r.logp_backward), format_double(r.logp_bidirectional),
                         format_double(r.uncond_pmi), format_double(r.cond_pmi), format_double(r.rel_backward),
                         format_double(r.sem_dist), format_double(r.phon_dist)});
  }
}

std::vector<FeatureRow> read_rows_csv(std::istream& in) {
  const auto table = csv::read(in);
  std::vector<std::size_t> col;
  for (const auto& h : feature_row_header()) col.push_back(table.column(h));
  std::vector<FeatureRow> rows;
  rows.reserve(table.rows.size());
  std::size_t line = 1;
  for (const auto& row : table.rows) {
    ++line;
    try {
      FeatureRow r;
      r.frame_id = std::stoull(row[col[0]]);
      r.candidate = row[col[1]];
      r.produced = std::stoi(row[col[2]]);
      if (r.produced != 0 && r.produced != 1) throw std::invalid_argument("produced must be 0 or 1");
      const std::string& lc = row[col[3]];
      if (lc == "function") r.lexical_class = LexicalClass::Function;
      else if (lc == "content") r.lexical_class = LexicalClass::Content;
      else if (!lc.empty()) throw std::invalid_argument("lexical_class '" + lc + "'");
      double* dst[] = {&r.logp_unigram, &r.logp_forward, &r.logp_backward, &r.logp_bidirectional,
                       &r.uncond_pmi,   &r.cond_pmi,     &r.rel_backward,  &r.sem_dist,
                       &r.phon_dist};
      for (std::size_t k = 0; k < 9; ++k) *dst[k] = std::stod(row[col[4 + k]]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(std::string("rows csv: ") + e.what(), line);
    }
  }
  return rows;
}

}  // namespace ctxpred
