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
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ctxpred/csv.hpp"
#include "ctxpred/gateway.hpp"
#include "ctxpred/measures.hpp"
#include "ctxpred/wire.hpp"
#include "test_util.hpp"

using namespace ctxpred;
using ctxpred::testing::corpus_of;
using nlohmann::json;

namespace {

struct Models {
  std::shared_ptr<const NGramModel> fwd, bwd, uni;
};

Models train(const Corpus& c, int order = 2) {
  auto v = build_vocab(c, 1);
  return {std::make_shared<NGramModel>(train_ngram(c, v, NGramOptions{.order = order})),
          std::make_shared<NGramModel>(train_ngram(c, v, NGramOptions{.order = order, .direction = Direction::Backward})),
          std::make_shared<NGramModel>(train_ngram(c, v, NGramOptions{.order = 1}))};
}

double mass(const std::vector<double>& lp) {
  double s = 0.0;
  for (double x : lp) s += std::exp(x);
  return s;
}

// Backend that counts calls and can be switched off.
class FlakyBackend final : public Backend {
 public:
  explicit FlakyBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
  std::string id() const override { return inner_->id(); }
  const Vocabulary& vocab() const override { return inner_->vocab(); }
  const std::vector<std::string>& candidate_space() const override { return inner_->candidate_space(); }
  std::vector<double> score(const ScoreRequest& req) override {
    ++calls;
    if (dead) throw TransportError("backend is down");
    return inner_->score(req);
  }
  bool infill_normalized() const override { return inner_->infill_normalized(); }
  bool native_backward() const override { return inner_->native_backward(); }
  std::size_t calls = 0;
  bool dead = false;

 private:
  std::shared_ptr<Backend> inner_;
};

void save_models(const Models& m, const std::filesystem::path& dir) {
  m.fwd->save_file((dir / "ngram_forward.json").string());
  m.bwd->save_file((dir / "ngram_backward.json").string());
  m.uni->save_file((dir / "ngram_unigram.json").string());
}

}  // namespace

TEST_CASE("forward scores over the full space are normalized") {
  auto m = train(ctxpred::testing::toy_corpus());
  Gateway g(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  for (const auto& pre : {std::vector<std::string>{}, {"it", "depends"}, {"the", "zebra"}}) {
    CHECK(mass(g.score_forward(pre, g.candidate_space()).logprobs) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(mass(g.score_backward(pre, g.candidate_space()).logprobs) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(mass(g.score_infill(pre, {"we"}, g.candidate_space()).logprobs) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("infill with an empty suffix equals forward") {
  auto m = train(ctxpred::testing::toy_corpus());
  Gateway g(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  const std::vector<std::string> pre = {"we", "took", "the"};
  auto f = g.score_forward(pre, g.candidate_space());
  auto i = g.score_infill(pre, {}, g.candidate_space());
  for (std::size_t k = 0; k < f.size(); ++k) CHECK(std::abs(f.logprobs[k] - i.logprobs[k]) <= 1e-12);
}

TEST_CASE("toy infill value") {
  auto m = train(corpus_of({"a b", "a c"}));
  Gateway g(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  CHECK(g.score_infill({"a"}, {"<eos>"}, {"b"}).at("b") == doctest::Approx(std::log(48.0 / 121.0)).epsilon(1e-14));
}

TEST_CASE("unknown candidates are mapped and flagged") {
  auto m = train(corpus_of({"a b", "a c"}));
  Gateway g(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  auto s = g.score_forward({"a"}, {"b", "zebra"});
  CHECK_FALSE(s.mapped_to_unk[0]);
  CHECK(s.mapped_to_unk[1]);
  CHECK(std::isfinite(s.at("zebra")));
  CHECK_THROWS_AS(s.at("missing"), ContractError);
  CHECK_THROWS_AS(g.score_forward({"a"}, {}), ContractError);
}

TEST_CASE("batch scores match the hand-count oracle") {
  auto corpus = ctxpred::testing::toy_corpus();
  auto m = train(corpus);
  Gateway g(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  auto recs = batch_score_corpus(g, corpus, *m.uni);
  auto oracle = csv::read_file((ctxpred::testing::golden_dir() / "toy_scores_oracle.csv").string());
  REQUIRE(recs.size() == oracle.rows.size());
  REQUIRE(recs.size() == corpus.token_count());
  double worst = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& row = oracle.rows[i];
    CHECK(recs[i].utt_index == std::stoul(row[0]));
    CHECK(recs[i].t == std::stoul(row[1]));
    CHECK(recs[i].word == row[2]);
    worst = std::max({worst, std::abs(recs[i].logp_unigram - std::stod(row[3])),
                      std::abs(recs[i].logp_forward - std::stod(row[4])),
                      std::abs(recs[i].logp_backward - std::stod(row[5])),
                      std::abs(recs[i].logp_bidirectional - std::stod(row[6]))});
  }
  CHECK(worst < 1e-12);

  // The CSV carries the same values and reads back losslessly.
  std::ostringstream out;
  write_scores_csv(out, recs);
  std::istringstream in(out.str());
  auto back = read_records_csv(in);
  REQUIRE(back.size() == recs.size());
  CHECK(back[5].logp_bidirectional == recs[5].logp_bidirectional);
  CHECK(back[5].conversation_id == recs[5].conversation_id);
}

TEST_CASE("one-token utterance uses the empty past") {
  auto corpus = corpus_of({"hi", "a b"});
  auto m = train(corpus);
  Gateway g(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  auto recs = batch_score_corpus(g, corpus, *m.uni);
  REQUIRE(recs.size() == 3);
  const WordId hi = m.fwd->vocab().id("hi");
  CHECK(recs[0].logp_forward == m.fwd->cond_logprob(hi, {}));
  // Nothing follows: the bidirectional value reduces to the forward one.
  CHECK(std::abs(recs[0].logp_bidirectional - recs[0].logp_forward) < 1e-12);
}

TEST_CASE("warm cache answers without backend calls") {
  ctxpred::testing::TempDir dir("cache");
  auto corpus = ctxpred::testing::toy_corpus();
  auto m = train(corpus);
  auto inner = std::make_shared<NgramBackend>(m.fwd, m.bwd);
  std::string first;
  {
    auto b = std::make_shared<FlakyBackend>(inner);
    Gateway g(b, GatewayOptions{.cache_dir = dir.path()});
    std::ostringstream out;
    write_scores_csv(out, batch_score_corpus(g, corpus, *m.uni));
    first = out.str();
    CHECK(b->calls > 0);
    CHECK(g.backend_calls() == b->calls);
  }
  auto b = std::make_shared<FlakyBackend>(inner);
  b->dead = true;
  Gateway g(b, GatewayOptions{.cache_dir = dir.path()});
  std::ostringstream out;
  BatchReport rep;
  write_scores_csv(out, batch_score_corpus(g, corpus, *m.uni, {}, &rep));
  CHECK(rep.failures.empty());
  CHECK(out.str() == first);
  CHECK(b->calls == 0);
  CHECK(g.backend_calls() == 0);
}

TEST_CASE("parallel batch equals serial") {
  auto corpus = ctxpred::testing::toy_corpus();
  auto m = train(corpus, 3);
  Gateway g1(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  Gateway g4(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  std::ostringstream a, b;
  write_scores_csv(a, batch_score_corpus(g1, corpus, *m.uni, BatchOptions{.jobs = 1}));
  write_scores_csv(b, batch_score_corpus(g4, corpus, *m.uni, BatchOptions{.jobs = 4}));
  CHECK(a.str() == b.str());
}

TEST_CASE("failing backend: error surfaced, no partial results") {
  auto corpus = corpus_of({"a b", "a c"});
  auto m = train(corpus);
  auto b = std::make_shared<FlakyBackend>(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  b->dead = true;
  Gateway g(b);
  CHECK_THROWS_AS(g.score_forward({"a"}, {"b"}), TransportError);
  BatchReport rep;
  auto recs = batch_score_corpus(g, corpus, *m.uni, {}, &rep);
  CHECK(recs.empty());
  CHECK(rep.failures.size() == 2);
}

TEST_CASE("dead wire backends raise transport errors") {
  auto m = train(corpus_of({"a b", "a c"}));
  const wire::RetryPolicy quick{2, std::chrono::milliseconds(1)};
  wire::HttpBackend http("http://127.0.0.1:9", m.fwd->vocab(), quick, std::chrono::seconds(1));
  // The gateway probes the model id for its cache keys, so a dead endpoint
  // fails at construction.
  CHECK_THROWS_AS(Gateway(std::shared_ptr<Backend>(&http, [](Backend*) {})), TransportError);
  CHECK_THROWS_AS(http.score(ScoreRequest{ScoreMode::Forward, {"a"}, {}, {"b"}, false}), TransportError);
  wire::StdioBackend dead("exit 3", m.fwd->vocab(), quick);
  CHECK_THROWS_AS(dead.score(ScoreRequest{ScoreMode::Forward, {"a"}, {}, {"b"}, false}), TransportError);
}

TEST_CASE("request decoding") {
  auto r = wire::decode_request(json::parse(R"({"mode":"infill","pre":["a"],"suf":["b"],"candidates":["c"],"order":"suf_first"})"));
  CHECK(r.mode == ScoreMode::Infill);
  CHECK(r.suffix_first);
  CHECK(wire::encode_request(r) == json::parse(R"({"mode":"infill","pre":["a"],"suf":["b"],"candidates":["c"],"order":"suf_first"})"));
  CHECK_THROWS_AS(wire::decode_request(json::parse(R"({"pre":[]})")), wire::RequestError);
  CHECK_THROWS_AS(wire::decode_request(json::parse(R"({"mode":"sideways","candidates":["a"]})")), wire::RequestError);
  CHECK_THROWS_AS(wire::decode_request(json::parse(R"({"mode":"forward","candidates":[]})")), wire::RequestError);
  CHECK_THROWS_AS(wire::decode_request(json::parse(R"({"mode":"forward","candidates":[1]})")), wire::RequestError);
  CHECK_THROWS_AS(wire::decode_request(json::parse(R"({"mode":"forward","candidates":["a"],"order":"x"})")),
                  wire::RequestError);
}

TEST_CASE("stdio serving loop") {
  auto m = train(corpus_of({"a b", "a c"}));
  NgramBackend backend(m.fwd, m.bwd);
  std::istringstream in(R"({"mode":"forward","pre":["a"],"candidates":["b","c"]})" "\n" "not json\n"
                        R"({"mode":"forward","candidates":[]})" "\n");
  std::ostringstream out;
  wire::serve_stdio(backend, in, out);
  std::istringstream lines(out.str());
  std::string l1, l2, l3;
  std::getline(lines, l1);
  std::getline(lines, l2);
  std::getline(lines, l3);
  auto r1 = json::parse(l1);
  CHECK(r1["logprobs"]["b"].get<double>() == doctest::Approx(std::log(1.0 / 3.0)));
  CHECK(r1["model_id"] == backend.id());
  CHECK(json::parse(l2)["status"] == 400);
  CHECK(json::parse(l3)["status"] == 400);
}

TEST_CASE("http round trip matches the in-process backend") {
  auto corpus = ctxpred::testing::toy_corpus();
  auto m = train(corpus);
  NgramBackend backend(m.fwd, m.bwd);
  wire::HttpServer server(backend);
  const int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.listen(); });
  {
    const std::string url = "http://127.0.0.1:" + std::to_string(port);
    auto client = std::make_shared<wire::HttpBackend>(url, m.fwd->vocab());
    Gateway remote(client);
    Gateway local(std::make_shared<NgramBackend>(m.fwd, m.bwd));
    const std::vector<std::string> pre = {"it", "depends"}, suf = {"whether", "we"};
    auto a = remote.score_forward(pre, remote.candidate_space());
    auto b = local.score_forward(pre, local.candidate_space());
    REQUIRE(remote.candidate_space() == local.candidate_space());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.logprobs[i] == b.logprobs[i]);
    auto ai = remote.score_infill(pre, suf, remote.candidate_space());
    auto bi = local.score_infill(pre, suf, local.candidate_space());
    for (std::size_t i = 0; i < ai.size(); ++i) CHECK(std::abs(ai.logprobs[i] - bi.logprobs[i]) < 1e-12);
    // Backward comes from the infill approximation and stays normalized.
    CHECK(mass(remote.score_backward(suf, remote.candidate_space()).logprobs) == doctest::Approx(1.0).epsilon(1e-9));

    httplib::Client raw(url);
    auto bad = raw.Post("/score", "{nope", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    auto bad2 = raw.Post("/score", R"({"mode":"forward"})", "application/json");
    REQUIRE(bad2);
    CHECK(bad2->status == 400);
    CHECK(json::parse(bad2->body)["error"].get<std::string>().find("candidates") != std::string::npos);
  }
  server.stop();
  t.join();
}

TEST_CASE("stdio child process backend") {
  ctxpred::testing::TempDir dir("stdio");
  auto m = train(ctxpred::testing::toy_corpus());
  save_models(m, dir.path());
  const std::string cmd = std::string("'") + CTXPRED_CLI + "' serve --stdio --models '" + dir.path().string() + "'";
  auto child = std::make_shared<wire::StdioBackend>(cmd, m.fwd->vocab());
  Gateway remote(child);
  Gateway local(std::make_shared<NgramBackend>(m.fwd, m.bwd));
  const std::vector<std::string> pre = {"we", "took"};
  auto a = remote.score_forward(pre, {"the", "a", "zebra"});
  auto b = local.score_forward(pre, {"the", "a", "zebra"});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.logprobs[i] == b.logprobs[i]);
  CHECK(a.mapped_to_unk[2]);
  CHECK_THROWS_AS(child->score(ScoreRequest{ScoreMode::Forward, {}, {}, {}, false}), ProtocolError);
}
