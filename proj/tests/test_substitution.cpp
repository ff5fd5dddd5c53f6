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

#include <cmath>
#include <set>
#include <sstream>

#include <doctest.h>

#include "ctxpred/csv.hpp"
#include "ctxpred/substitution.hpp"
#include "test_util.hpp"

using namespace ctxpred;
using Tokens = std::vector<std::string>;

namespace {

Corpus parse(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return parse_corpus(in);
}

// "we took the car the bus" shaped records with a configurable middle.
std::string record(const std::string& tokens, const std::string& pos, const std::string& regions) {
  return R"({"conversation_id":"x","speaker":"A","tokens":)" + tokens + R"(,"pos":)" + pos +
         R"(,"disfluencies":)" + regions + "}\n";
}

struct Fixture {
  Corpus corpus = ctxpred::testing::toy_corpus();
  Vocabulary vocab = build_vocab(corpus, 1);
  std::shared_ptr<const NGramModel> fwd =
      std::make_shared<NGramModel>(train_ngram(corpus, vocab, NGramOptions{.order = 2}));
  std::shared_ptr<const NGramModel> bwd = std::make_shared<NGramModel>(
      train_ngram(corpus, vocab, NGramOptions{.order = 2, .direction = Direction::Backward}));
  NGramModel uni = train_ngram(corpus, vocab, NGramOptions{.order = 1});
  Gateway gateway{std::make_shared<NgramBackend>(fwd, bwd)};
  EmbeddingTable emb = EmbeddingTable::load(ctxpred::testing::data_dir() / "toy_embeddings.vec");
  PronLexicon lex = PronLexicon::load(ctxpred::testing::data_dir() / "toy_lexicon.tsv");
  PhoneticFeatureTable feats = PhoneticFeatureTable::load(ctxpred::testing::data_dir() / "phonetic_features.tsv");

  AssembleContext ctx() { return {&gateway, &uni, &emb, &lex, &feats}; }
};

}  // namespace

TEST_CASE("two-error utterance gives two frames") {
  Corpus one;
  one.utterances = {ctxpred::testing::toy_corpus().utterances[0]};
  ExtractReport rep;
  auto frames = extract_frames(one, {}, &rep);
  REQUIRE(frames.size() == 2);
  CHECK(rep.candidate_pairs == 2);
  CHECK(frames[0].pre_context == Tokens{"it", "depends", "on", "whether"});
  CHECK(frames[0].error == "you");
  CHECK(frames[0].repair == "we");
  CHECK(frames[0].post_context ==
        Tokens{"figure", "that", "we", "have", "a", "defense", "oriented", "military", "or", "an",
               "aggression", "oriented", "military"});
  CHECK(frames[0].category == std::optional<std::string>("semantic"));
  CHECK(frames[1].error == "aggressive");
  CHECK(frames[1].repair == "aggression");
  CHECK(frames[1].pos == "JJ");
  CHECK(frames[1].post_context == Tokens{"oriented", "military"});
  CHECK(frames[1].pre_context.size() == 15);
  CHECK(frames[1].pre_context[4] == "we");  // the other error is already repaired
  CHECK(frames[0].fluent() == frames[1].fluent());
}

TEST_CASE("toy corpus frame count and exclusions") {
  ExtractReport rep;
  auto frames = extract_frames(ctxpred::testing::toy_corpus(), {}, &rep);
  CHECK(frames.size() == 13);
  CHECK(rep.candidate_pairs == 18);
  for (const auto* reason : {"identical_words", "intervening_material", "missing_pos", "pos_mismatch",
                             "unequal_length"}) {
    CHECK(rep.excluded.at(reason) == 1);
  }
  for (std::size_t i = 0; i < frames.size(); ++i) CHECK(frames[i].frame_id == i);
}

TEST_CASE("unequal lengths are excluded") {
  auto c = parse(record(R"(["we","took","the","red","car","bus"])", R"(["PRP","VBD","DT","JJ","NN","NN"])",
                        R"([{"kind":"reparandum","start":3,"end":5},{"kind":"repair","start":5,"end":6,"repair_of":0}])"));
  ExtractReport rep;
  CHECK(extract_frames(c, {}, &rep).empty());
  CHECK(rep.excluded.at("unequal_length") == 1);
}

TEST_CASE("pos mismatch is excluded") {
  auto c = parse(record(R"(["i","like","running","run"])", R"(["PRP","VBP","VBG","NN"])",
                        R"([{"kind":"reparandum","start":2,"end":3},{"kind":"repair","start":3,"end":4,"repair_of":0}])"));
  ExtractReport rep;
  CHECK(extract_frames(c, {}, &rep).empty());
  CHECK(rep.excluded.at("pos_mismatch") == 1);
}

TEST_CASE("missing pos and identical words") {
  auto nopos = parse(R"({"speaker":"A","tokens":["the","car","bus"],"disfluencies":[{"kind":"reparandum","start":1,"end":2},{"kind":"repair","start":2,"end":3,"repair_of":0}]})" "\n");
  ExtractReport rep;
  CHECK(extract_frames(nopos, {}, &rep).empty());
  CHECK(rep.excluded.at("missing_pos") == 1);
  auto same = parse(record(R"(["the","car","car"])", R"(["DT","NN","NN"])",
                           R"([{"kind":"reparandum","start":1,"end":2},{"kind":"repair","start":2,"end":3,"repair_of":0}])"));
  ExtractReport rep2;
  CHECK(extract_frames(same, {}, &rep2).empty());
  CHECK(rep2.excluded.at("identical_words") == 1);
}

TEST_CASE("fillers may intervene, other words may not") {
  auto filler = parse(record(R"(["the","car","uh","bus","left"])", R"(["DT","NN","UH","NN","VBD"])",
                             R"([{"kind":"reparandum","start":1,"end":2},{"kind":"filler","start":2,"end":3},)"
                             R"({"kind":"repair","start":3,"end":4,"repair_of":0}])"));
  auto frames = extract_frames(filler);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].pre_context == Tokens{"the"});
  CHECK(frames[0].post_context == Tokens{"left"});
  auto other = parse(record(R"(["the","car","big","bus"])", R"(["DT","NN","JJ","NN"])",
                            R"([{"kind":"reparandum","start":1,"end":2},{"kind":"repair","start":3,"end":4,"repair_of":0}])"));
  ExtractReport rep;
  CHECK(extract_frames(other, {}, &rep).empty());
  CHECK(rep.excluded.at("intervening_material") == 1);
}

TEST_CASE("category filter") {
  ExtractReport rep;
  auto frames = extract_frames(ctxpred::testing::toy_corpus(), ExtractOptions{{"semantic"}}, &rep);
  CHECK_FALSE(frames.empty());
  for (const auto& f : frames) CHECK(f.category == std::optional<std::string>("semantic"));
  CHECK(rep.excluded.at("category_filtered") > 0);
  CHECK(is_error_category("mixed"));
  CHECK_FALSE(is_error_category("lexical"));
}

TEST_CASE("frames jsonl round trip") {
  auto frames = extract_frames(ctxpred::testing::toy_corpus());
  std::ostringstream out;
  write_frames_jsonl(out, frames);
  std::istringstream in(out.str());
  CHECK(read_frames_jsonl(in) == frames);
}

TEST_CASE("rows for a five-word vocabulary") {
  auto corpus = ctxpred::testing::corpus_of({"the cat sat", "a dog sat"});
  auto v = build_vocab(corpus, 1);
  auto fwd = std::make_shared<NGramModel>(train_ngram(corpus, v, {}));
  auto uni = train_ngram(corpus, v, NGramOptions{.order = 1});
  Gateway g(std::make_shared<NgramBackend>(fwd));
  EmbeddingTable emb;
  const std::vector<std::pair<std::string, std::vector<double>>> vecs = {
      {"the", {1, 0, 0}}, {"cat", {0, 1, 0.2}}, {"sat", {0, 0, 1}}, {"a", {1, 0.1, 0}}, {"dog", {0, 1, 0.3}}};
  for (const auto& [w, x] : vecs) emb.add(w, x);
  SubstitutionFrame f;
  f.pre_context = {"the"};
  f.post_context = {"sat"};
  f.error = "dog";
  f.repair = "cat";
  f.pos = "NN";
  AssembleContext ctx{&g, &uni, &emb, nullptr, nullptr};

  auto rows = assemble_rows(f, ctx, AssembleOptions{.noise_var = 0.05, .seed = 4});
  REQUIRE(rows.size() == 5);
  int produced = 0;
  for (const auto& r : rows) produced += r.produced;
  CHECK(produced == 1);
  const auto& repair_row = *std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.candidate == "cat"; });
  CHECK(repair_row.produced == 0);
  auto rng = stream_rng(4, f.frame_id);
  const auto target = noisy_semantic_target(emb.at("cat"), 0.05, rng);
  CHECK(repair_row.sem_dist == semantic_distance(emb.at("cat"), target));
  CHECK(repair_row.sem_dist > 0.0);

  auto clean = assemble_rows(f, ctx, AssembleOptions{.noise_var = 0.0});
  int zeros = 0;
  for (const auto& r : clean) {
    if (std::abs(r.sem_dist) < 1e-15) {
      ++zeros;
      CHECK(r.candidate == "cat");
    }
  }
  CHECK(zeros == 1);
}

TEST_CASE("missing embeddings: skip drops rows, strict throws") {
  Fixture fx;
  auto frames = extract_frames(fx.corpus);
  EmbeddingTable partial;
  for (WordId id : fx.vocab.content_ids()) {
    const auto& w = fx.vocab.word(id);
    if (w != "military" && fx.emb.contains(w)) partial.add(w, *fx.emb.find(w));
  }
  AssembleContext ctx{&fx.gateway, &fx.uni, &partial, nullptr, nullptr};
  AssembleReport rep;
  auto rows = assemble_rows(frames[0], ctx, AssembleOptions{.policy = MissingPolicy::Skip}, &rep);
  CHECK(rows.size() == fx.vocab.content_ids().size() - 1);
  CHECK(rep.dropped_rows == 1);
  CHECK_THROWS_AS(assemble_rows(frames[0], ctx, AssembleOptions{.policy = MissingPolicy::Strict}), ContractError);

  SubstitutionFrame ghost = frames[0];
  ghost.error = "zebra";
  AssembleReport rep2;
  CHECK(assemble_rows(ghost, fx.ctx(), {}, &rep2).empty());
  REQUIRE(rep2.skipped_frames.size() == 1);
  CHECK_THROWS_AS(assemble_rows(ghost, fx.ctx(), AssembleOptions{.policy = MissingPolicy::Strict}), ContractError);
}

TEST_CASE("two-error frames match hand-computed n-gram features") {
  Fixture fx;
  auto frames = extract_frames(fx.corpus);
  auto oracle = csv::read_file((ctxpred::testing::golden_dir() / "worked_frames_features_oracle.csv").string());
  const AssembleOptions opts{.noise_var = 0.1, .seed = 7, .policy = MissingPolicy::Strict};
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    auto rows = assemble_rows(frames[k], fx.ctx(), opts);
    CHECK(rows.size() == fx.vocab.content_ids().size());
    for (const auto& o : oracle.rows) {
      if (std::stoul(o[0]) != k) continue;
      auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.candidate == o[1]; });
      REQUIRE(it != rows.end());
      worst = std::max({worst, std::abs(it->logp_unigram - std::stod(o[2])), std::abs(it->logp_forward - std::stod(o[3])),
                        std::abs(it->logp_backward - std::stod(o[4])),
                        std::abs(it->logp_bidirectional - std::stod(o[5]))});
      CHECK(it->cond_pmi == it->logp_bidirectional - it->logp_forward);
      CHECK(it->produced == (o[1] == frames[k].error ? 1 : 0));
      ++checked;
    }
  }
  CHECK(checked == oracle.rows.size());
  CHECK(worst < 1e-12);
}

TEST_CASE("assembly is deterministic, order independent and round trips") {
  Fixture fx;
  auto frames = extract_frames(fx.corpus);
  const AssembleOptions opts{.noise_var = 0.1, .seed = 7, .policy = MissingPolicy::Strict};
  auto serial = assemble_all(frames, fx.ctx(), opts, 1);
  auto parallel = assemble_all(frames, fx.ctx(), opts, 3);
  std::ostringstream a, b;
  write_rows_csv(a, serial);
  write_rows_csv(b, parallel);
  CHECK(a.str() == b.str());
  CHECK(serial.size() == frames.size() * fx.vocab.content_ids().size());
  // The last frame alone gets the same noise as inside the batch.
  auto alone = assemble_rows(frames.back(), fx.ctx(), opts);
  CHECK(alone.back().sem_dist == serial.back().sem_dist);
  CHECK(alone.back().phon_dist == serial.back().phon_dist);

  std::istringstream in(a.str());
  auto back = read_rows_csv(in);
  REQUIRE(back.size() == serial.size());
  CHECK(back[17].cond_pmi == serial[17].cond_pmi);
  CHECK(back[17].lexical_class == serial[17].lexical_class);
  std::istringstream hdr(a.str());
  std::string first;
  std::getline(hdr, first);
  CHECK(first ==
        "frame_id,candidate,produced,lexical_class,logp_unigram,logp_forward,logp_backward,logp_bidirectional,"
        "uncond_pmi,cond_pmi,rel_backward,sem_dist,phon_dist");
}

TEST_CASE("negative sampling keeps the error and the repair") {
  Fixture fx;
  auto frames = extract_frames(fx.corpus);
  auto rows = assemble_rows(frames[2], fx.ctx(), AssembleOptions{.seed = 3, .negative_sample = 6});
  CHECK(rows.size() == 8);
  std::set<std::string> names;
  for (const auto& r : rows) names.insert(r.candidate);
  CHECK(names.count(frames[2].error));
  CHECK(names.count(frames[2].repair));
}

TEST_CASE("lexical class and heuristic categories") {
  CHECK(lexical_class("the") == LexicalClass::Function);
  CHECK(lexical_class("military") == LexicalClass::Content);
  CHECK(heuristic_category("aggressive", "aggression") == "morphosyntactic");
  CHECK(heuristic_category("cat", "cap") == "phonological");
  CHECK(heuristic_category("car", "bus") == "semantic");
  FeatureRow r;
  r.sem_dist = 0.5;
  CHECK(r.feature("sem_dist") == 0.5);
  CHECK(r.feature("forward") == 0.0);
  CHECK_THROWS_AS(r.feature("nope"), ContractError);
}
