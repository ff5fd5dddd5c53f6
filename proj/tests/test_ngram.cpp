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
#include <sstream>

#include <boost/random/uniform_int_distribution.hpp>
#include <doctest.h>

#include "ctxpred/ngram.hpp"
#include "test_util.hpp"

using namespace ctxpred;
using ctxpred::testing::corpus_of;

namespace {

// Oracle values (tests/oracle/ngram_oracle.py) for the corpus {"a b", "a c"}.
constexpr double kToyPerplexity = 2.4662120743304703;

struct Toy {
  Corpus corpus = corpus_of({"a b", "a c"});
  Vocabulary vocab = build_vocab(corpus, 1);
  WordId a = vocab.id("a"), b = vocab.id("b"), c = vocab.id("c");

  NGramModel model(int order = 2, Direction dir = Direction::Forward) const {
    return train_ngram(corpus, vocab, NGramOptions{.order = order, .alpha = 1.0, .direction = dir});
  }
};

double mass(const std::vector<double>& lp) {
  double s = 0.0;
  for (double x : lp) s += std::exp(x);
  return s;
}

}  // namespace

TEST_CASE("hand counts") {
  Toy t;
  auto m = t.model();
  const WordId ha[] = {t.a};
  CHECK(m.count(ha, t.b) == 1);
  CHECK(m.context_total(ha) == 2);
  CHECK(m.outcome_count() == 4);
}

TEST_CASE("backward model counts the reversed sequence") {
  auto corpus = corpus_of({"a b"});
  auto v = build_vocab(corpus, 1);
  auto m = train_ngram(corpus, v, NGramOptions{.order = 2, .direction = Direction::Backward});
  const WordId bos[] = {NGramModel::kBos};
  const WordId hb[] = {v.id("b")};
  const WordId ha[] = {v.id("a")};
  CHECK(m.count(bos, v.id("b")) == 1);
  CHECK(m.count(hb, v.id("a")) == 1);
  CHECK(m.count(ha, Vocabulary::kEosId) == 1);
  CHECK(m.count(bos, v.id("a")) == 0);
  CHECK(m.count(ha, v.id("b")) == 0);
}

TEST_CASE("laplace conditionals") {
  Toy t;
  auto m = t.model();
  const WordId ha[] = {t.a};
  const WordId hb[] = {t.b};
  CHECK(m.cond_logprob(t.b, ha) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-15));
  CHECK(m.cond_logprob(t.a, hb) == doctest::Approx(std::log(0.2)).epsilon(1e-15));
  CHECK(mass(m.distribution(ha)) == doctest::Approx(1.0).epsilon(1e-12));
  // An unseen context is uniform over the outcomes.
  const WordId hc[] = {Vocabulary::kEosId};
  CHECK(m.cond_logprob(t.a, hc) == doctest::Approx(std::log(0.25)));
}

TEST_CASE("unigram") {
  Toy t;
  auto u = t.model(1);
  // 6 predicted tokens (4 words, 2 <eos>) and V = 4: (1 + 1) / (6 + 4).
  CHECK(u.cond_logprob(t.b, {}) == doctest::Approx(std::log(0.2)).epsilon(1e-15));
  CHECK(u.cond_logprob(t.a, {}) == doctest::Approx(std::log(0.3)).epsilon(1e-15));
}

TEST_CASE("perplexity") {
  Toy t;
  CHECK(perplexity(t.model(), t.corpus) == doctest::Approx(kToyPerplexity).epsilon(1e-13));
  NGramModel uniform(t.vocab, NGramOptions{.order = 2});
  CHECK(perplexity(uniform, t.corpus) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK_THROWS_AS(perplexity(uniform, Corpus{}), ContractError);
  CHECK_THROWS_AS(train_ngram(Corpus{}, t.vocab, {}), ContractError);
}

TEST_CASE("infill by enumeration") {
  Toy t;
  auto m = t.model();
  const WordId pre[] = {t.a};
  const WordId suf[] = {Vocabulary::kEosId};
  // 48/121 from exact rational enumeration.
  CHECK(m.infill_logprob(t.b, pre, suf) == doctest::Approx(std::log(48.0 / 121.0)).epsilon(1e-14));
  CHECK(std::exp(m.infill_logprob(t.b, pre, suf)) == doctest::Approx(0.397).epsilon(1e-3));
  for (WordId w : m.outcomes()) CHECK(m.infill_logprob(w, pre, {}) == m.cond_logprob(w, pre));
  CHECK(mass(m.infill_distribution(pre, suf)) == doctest::Approx(1.0).epsilon(1e-12));
  auto bwd = t.model(2, Direction::Backward);
  CHECK_THROWS_AS(bwd.infill_logprob(t.b, pre, suf), ContractError);
}

TEST_CASE("unknown words become an outcome only when seen") {
  Toy t;
  auto v2 = build_vocab(t.corpus, 2);
  auto m = train_ngram(t.corpus, v2, {});
  CHECK(m.is_outcome(Vocabulary::kUnkId));
  CHECK(m.outcome_count() == 3);  // a, <unk>, <eos>
  CHECK_FALSE(t.model().is_outcome(Vocabulary::kUnkId));
  CHECK_FALSE(m.is_outcome(Vocabulary::kMidId));
}

TEST_CASE("speaker tags are context, not outcomes") {
  auto corpus = corpus_of({"a b", "a c"});
  auto v = build_vocab(corpus, 1, true);
  auto m = train_ngram(corpus, v, NGramOptions{.order = 2, .speaker_tags = true});
  CHECK(m.outcome_count() == 4);
  const WordId tag[] = {v.id("<A>")};
  CHECK(m.count(tag, v.id("a")) == 1);
  CHECK(mass(m.distribution(tag)) == doctest::Approx(1.0).epsilon(1e-12));
  auto bwd = train_ngram(corpus, v, NGramOptions{.order = 2, .direction = Direction::Backward, .speaker_tags = true});
  CHECK_FALSE(bwd.speaker_tags());
}

TEST_CASE("serialization round trip") {
  auto corpus = ctxpred::testing::toy_corpus();
  auto v = build_vocab(corpus, 1);
  auto m = train_ngram(corpus, v, NGramOptions{.order = 3, .alpha = 0.5});
  std::ostringstream out;
  m.save(out);
  std::istringstream in(out.str());
  auto back = NGramModel::load(in);
  CHECK(back.fingerprint() == m.fingerprint());
  CHECK(back.order() == 3);
  CHECK(back.alpha() == 0.5);
  CHECK(back.vocab() == v);
  const WordId h[] = {v.id("it"), v.id("depends")};
  CHECK(back.distribution(h) == m.distribution(h));
  std::istringstream bad("{\"format\": \"nope\"}");
  CHECK_THROWS(NGramModel::load(bad));
}

TEST_CASE("bad options") {
  Toy t;
  CHECK_THROWS_AS(NGramModel(t.vocab, NGramOptions{.order = 0}), ContractError);
  CHECK_THROWS_AS(NGramModel(t.vocab, NGramOptions{.order = 2, .alpha = 0.0}), ContractError);
}

TEST_CASE("normalization sweep over random corpora and queries") {
  double worst_cond = 0.0, worst_infill = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto rng = stream_rng(11, k);
    auto corpus = ctxpred::testing::random_corpus(rng, 30, 6, 7);
    auto v = build_vocab(corpus, 1 + static_cast<int>(k % 2));
    const int order = 1 + static_cast<int>(k % 3);
    auto m = train_ngram(corpus, v, NGramOptions{.order = order, .alpha = 0.1 + 0.3 * static_cast<double>(k % 4)});
    boost::random::uniform_int_distribution<std::size_t> pick(0, m.outcome_count() - 1), len(0, 4);
    for (int q = 0; q < 25; ++q) {
      std::vector<WordId> pre, suf;
      for (std::size_t i = len(rng); i > 0; --i) pre.push_back(m.outcomes()[pick(rng)]);
      for (std::size_t i = len(rng); i > 0; --i) suf.push_back(m.outcomes()[pick(rng)]);
      worst_cond = std::max(worst_cond, std::abs(mass(m.distribution(pre)) - 1.0));
      worst_infill = std::max(worst_infill, std::abs(mass(m.infill_distribution(pre, suf)) - 1.0));
      double s = 0.0;
      for (WordId w : m.outcomes()) s += std::exp(m.infill_logprob(w, pre, suf));
      worst_infill = std::max(worst_infill, std::abs(s - 1.0));
    }
  }
  CHECK(worst_cond < 1e-12);
  CHECK(worst_infill < 1e-9);
}
