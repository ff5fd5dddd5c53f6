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

#ifndef CTXPRED_TESTS_TEST_UTIL_HPP_
#define CTXPRED_TESTS_TEST_UTIL_HPP_

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <boost/random/uniform_int_distribution.hpp>

#include "ctxpred/corpus.hpp"

namespace ctxpred::testing {

inline std::filesystem::path data_dir() { return CTXPRED_DATA_DIR; }
inline std::filesystem::path golden_dir() { return std::filesystem::path(CTXPRED_TEST_DIR) / "golden"; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ctxpred_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Corpus corpus_of(std::initializer_list<std::string> texts) {
  Corpus c;
  bool b = false;
  for (const auto& t : texts) {
    Utterance u;
    u.conversation_id = "t";
    u.speaker = b ? Speaker::B : Speaker::A;
    b = !b;
    std::istringstream ss(t);
    for (std::string w; ss >> w;) u.tokens.push_back(w);
    c.utterances.push_back(std::move(u));
  }
  return c;
}

// n utterances of 1..max_len words drawn from w0..w{alphabet-1}.
inline Corpus random_corpus(Rng& rng, std::size_t n, std::size_t alphabet, std::size_t max_len) {
  boost::random::uniform_int_distribution<std::size_t> len(1, max_len), word(0, alphabet - 1);
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    Utterance u;
    u.conversation_id = "r";
    u.speaker = i % 2 ? Speaker::B : Speaker::A;
    const std::size_t l = len(rng);
    for (std::size_t t = 0; t < l; ++t) u.tokens.push_back("w" + std::to_string(word(rng)));
    c.utterances.push_back(std::move(u));
  }
  return c;
}

inline Corpus toy_corpus() { return load_corpus(data_dir() / "toy_corpus.jsonl"); }

}  // namespace ctxpred::testing

#endif  // CTXPRED_TESTS_TEST_UTIL_HPP_
