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

#include <algorithm>
#include <sstream>

#include <doctest.h>

#include "ctxpred/infill.hpp"
#include "test_util.hpp"

using namespace ctxpred;
using ctxpred::testing::corpus_of;
using Tokens = std::vector<std::string>;

TEST_CASE("augmented training input") {
  Utterance u;
  u.tokens = {"So", "this", "is", "the", "first", "time", "I", "did", "this", "conversation"};
  CHECK(augment_utterance(u, 5, false).line() ==
        "<PRE> So this is the <SUF> time I did this conversation <MID> first <eos>");
  CHECK(augment_utterance(u, 5, true).line() ==
        "<SUF> time I did this conversation <PRE> So this is the <MID> first <eos>");
}

TEST_CASE("single token utterance") {
  Utterance u;
  u.tokens = {"hi"};
  CHECK(augment_utterance(u, 1, false).line() == "<PRE> <SUF> <MID> hi <eos>");
  CHECK_THROWS_AS(augment_utterance(u, 2, false), ContractError);
  CHECK_THROWS_AS(augment_utterance(u, 0, false), ContractError);
}

TEST_CASE("speaker tag heads the prefix block") {
  Utterance u;
  u.speaker = Speaker::B;
  u.tokens = {"a", "b"};
  CHECK(augment_utterance(u, 2, true, true).line() == "<SUF> <PRE> <B> a <MID> b <eos>");
}

TEST_CASE("infill queries") {
  CHECK(make_infill_query({"a"}, {"b", "c"}, false) == Tokens{"<PRE>", "a", "<SUF>", "b", "c", "<MID>"});
  CHECK(make_infill_query({}, {}, false) == Tokens{"<PRE>", "<SUF>", "<MID>"});
  CHECK(make_infill_query({"a"}, {"b"}, true) == Tokens{"<SUF>", "b", "<PRE>", "a", "<MID>"});
}

TEST_CASE("seed 7 on the toy corpus matches the golden records") {
  auto records = augment_corpus(ctxpred::testing::toy_corpus(), 7);
  std::ostringstream out;
  write_augmented(out, records);
  CHECK(out.str() == ctxpred::testing::slurp(ctxpred::testing::golden_dir() / "toy_augmented_seed7.txt"));
  std::ostringstream again;
  write_augmented(again, augment_corpus(ctxpred::testing::toy_corpus(), 7));
  CHECK(again.str() == out.str());
  std::ostringstream other;
  write_augmented(other, augment_corpus(ctxpred::testing::toy_corpus(), 8));
  CHECK(other.str() != out.str());
}

TEST_CASE("token conservation") {
  auto corpus = ctxpred::testing::toy_corpus();
  auto records = augment_corpus(corpus, 3, AugmentOptions{.samples_per_utterance = 4});
  REQUIRE(records.size() == 4 * corpus.size());
  for (const auto& r : records) {
    Tokens body;
    for (const auto& t : r.sequence) {
      if (t != "<PRE>" && t != "<SUF>" && t != "<MID>" && t != "<eos>") body.push_back(t);
    }
    Tokens src = corpus.utterances[r.source_index].tokens;
    std::sort(body.begin(), body.end());
    std::sort(src.begin(), src.end());
    CHECK(body == src);
    CHECK(r.sequence[r.sequence.size() - 2] == corpus.utterances[r.source_index].tokens[r.k - 1]);
  }
}

TEST_CASE("records do not depend on samples of other utterances") {
  auto corpus = corpus_of({"a b c", "d e f g", "h i"});
  auto all = augment_corpus(corpus, 5);
  Corpus tail;
  tail.utterances = {corpus.utterances[0], corpus.utterances[1]};
  auto part = augment_corpus(tail, 5);
  CHECK(part[0].line() == all[0].line());
  CHECK(part[1].line() == all[1].line());
}

TEST_CASE("empty utterances are skipped and counted") {
  auto corpus = corpus_of({"a b", "c"});
  corpus.utterances.insert(corpus.utterances.begin() + 1, Utterance{});
  AugmentReport rep;
  auto records = augment_corpus(corpus, 1, {}, &rep);
  CHECK(records.size() == 2);
  CHECK(rep.skipped_empty == 1);
  CHECK(records[1].source_index == 2);
}

TEST_CASE("swap probability extremes and validation") {
  auto corpus = corpus_of({"a b c", "d e", "f g h i"});
  for (const auto& r : augment_corpus(corpus, 9, AugmentOptions{.swap_prob = 0.0})) CHECK_FALSE(r.swapped);
  for (const auto& r : augment_corpus(corpus, 9, AugmentOptions{.swap_prob = 1.0})) CHECK(r.swapped);
  CHECK_THROWS_AS(augment_corpus(corpus, 9, AugmentOptions{.swap_prob = 1.5}), ContractError);
  CHECK_THROWS_AS(augment_corpus(corpus, 9, AugmentOptions{.samples_per_utterance = 0}), ContractError);
}
