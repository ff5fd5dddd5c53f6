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

#include "ctxpred/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ctxpred {

using nlohmann::json;

std::string_view to_string(Speaker s) { return s == Speaker::A ? "A" : "B"; }

std::string_view to_string(DisfluencyKind k) {
  switch (k) {
    case DisfluencyKind::Reparandum: return "reparandum";
    case DisfluencyKind::Repair: return "repair";
    case DisfluencyKind::Filler: return "filler";
    case DisfluencyKind::Repetition: return "repetition";
  }
  return "filler";
}

DisfluencyKind parse_disfluency_kind(std::string_view s) {
  if (s == "reparandum") return DisfluencyKind::Reparandum;
  if (s == "repair") return DisfluencyKind::Repair;
  if (s == "filler") return DisfluencyKind::Filler;
  if (s == "repetition") return DisfluencyKind::Repetition;
  throw ContractError("unknown disfluency kind '" + std::string(s) + "'");
}

std::string speaker_tag(Speaker s) { return s == Speaker::A ? "<A>" : "<B>"; }

void Utterance::validate() const {
  if (pos && pos->size() != tokens.size()) {
    throw ContractError("alignment mismatch: " + std::to_string(pos->size()) + " pos tags for " +
                        std::to_string(tokens.size()) + " tokens");
  }
  for (std::size_t i = 0; i < disfluencies.size(); ++i) {
    const auto& r = disfluencies[i];
    if (r.start >= r.end || r.end > tokens.size()) {
      throw ContractError("disfluency region " + std::to_string(i) + " [" + std::to_string(r.start) +
                          ", " + std::to_string(r.end) + ") outside utterance of length " +
                          std::to_string(tokens.size()));
    }
    if (r.kind == DisfluencyKind::Repair) {
      if (!r.repair_of) throw ContractError("repair region " + std::to_string(i) + " lacks repair_of");
      if (*r.repair_of >= disfluencies.size() ||
          disfluencies[*r.repair_of].kind != DisfluencyKind::Reparandum) {
        throw ContractError("repair region " + std::to_string(i) +
                            " does not reference a reparandum region");
      }
    } else if (r.repair_of) {
      throw ContractError("region " + std::to_string(i) + " has repair_of but is not a repair");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = disfluencies[j];
      if (r.start < o.end && o.start < r.end) {
        throw ContractError("disfluency regions " + std::to_string(j) + " and " +
                            std::to_string(i) + " overlap");
      }
    }
  }
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.tokens.size();
  return n;
}

namespace {

std::string lower_ascii(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

std::vector<std::string> string_list(const json& j, const char* field) {
  if (!j.is_array()) throw ContractError(std::string("'") + field + "' must be an array of strings");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string()) throw ContractError(std::string("'") + field + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::size_t index_field(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_number_integer() || j[field].get<long long>() < 0) {
    throw ContractError(std::string("disfluency '") + field + "' must be a non-negative integer");
  }
  return j[field].get<std::size_t>();
}

Utterance parse_record(const json& j, const LoadOptions& opts) {
  if (!j.is_object()) throw ContractError("record is not a JSON object");
  Utterance u;
  if (j.contains("conversation_id")) {
    if (!j["conversation_id"].is_string()) throw ContractError("'conversation_id' must be a string");
    u.conversation_id = j["conversation_id"].get<std::string>();
  }
  if (!j.contains("speaker") || !j["speaker"].is_string()) throw ContractError("missing 'speaker'");
  const auto spk = j["speaker"].get<std::string>();
  if (spk == "A") {
    u.speaker = Speaker::A;
  } else if (spk == "B") {
    u.speaker = Speaker::B;
  } else {
    throw ContractError("speaker must be \"A\" or \"B\", got \"" + spk + "\"");
  }
  if (j.contains("tokens")) {
    u.tokens = string_list(j["tokens"], "tokens");
  } else if (j.contains("text")) {
    if (!j["text"].is_string()) throw ContractError("'text' must be a string");
    u.tokens = split_ws(j["text"].get<std::string>());
  } else {
    throw ContractError("record has neither 'tokens' nor 'text'");
  }
  if (opts.lowercase) {
    for (auto& t : u.tokens) t = lower_ascii(std::move(t));
  }
  if (j.contains("pos") && !j["pos"].is_null()) u.pos = string_list(j["pos"], "pos");
  if (j.contains("disfluencies") && !j["disfluencies"].is_null()) {
    const auto& regions = j["disfluencies"];
    if (!regions.is_array()) throw ContractError("'disfluencies' must be an array");
    for (const auto& r : regions) {
      if (!r.is_object() || !r.contains("kind") || !r["kind"].is_string()) {
        throw ContractError("disfluency region needs a string 'kind'");
      }
      DisfluencyRegion region;
      region.kind = parse_disfluency_kind(r["kind"].get<std::string>());
      region.start = index_field(r, "start");
      region.end = index_field(r, "end");
      if (r.contains("repair_of") && !r["repair_of"].is_null()) region.repair_of = index_field(r, "repair_of");
      if (r.contains("category") && !r["category"].is_null()) {
        if (!r["category"].is_string()) throw ContractError("'category' must be a string");
        region.category = r["category"].get<std::string>();
      }
      u.disfluencies.push_back(std::move(region));
    }
  }
  u.validate();
  return u;
}

}  // namespace

Corpus parse_corpus(std::istream& in, const LoadOptions& opts, LoadReport* report) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.utterances.push_back(parse_record(json::parse(line), opts));
    } catch (const json::exception& e) {
      if (opts.strict) throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
      if (report) {
        ++report->skipped;
        report->warnings.push_back("line " + std::to_string(lineno) + ": " + e.what());
      }
    } catch (const ContractError& e) {
      if (opts.strict) throw ParseError(e.what(), lineno);
      if (report) {
        ++report->skipped;
        report->warnings.push_back("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  return parse_corpus(in, opts, report);
}

std::string to_jsonl(const Utterance& u) {
  // ordered_json keeps the documented field order.
  nlohmann::ordered_json j;
  j["conversation_id"] = u.conversation_id;
  j["speaker"] = std::string(to_string(u.speaker));
  j["tokens"] = u.tokens;
  if (u.pos) j["pos"] = *u.pos;
  if (!u.disfluencies.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : u.disfluencies) {
      nlohmann::ordered_json jr;
      jr["kind"] = std::string(to_string(r.kind));
      jr["start"] = r.start;
      jr["end"] = r.end;
      if (r.repair_of) jr["repair_of"] = *r.repair_of;
      if (r.category) jr["category"] = *r.category;
      arr.push_back(std::move(jr));
    }
    j["disfluencies"] = std::move(arr);
  }
  return j.dump();
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& u : corpus.utterances) out << to_jsonl(u) << '\n';
}

// --- Vocabulary ---

Vocabulary::Vocabulary() {
  for (auto w : {kEos, kUnk, kPre, kSuf, kMid}) add(std::string(w));
  n_special_ = words_.size();
}

void Vocabulary::add(std::string word) {
  const auto id = static_cast<WordId>(words_.size());
  index_.emplace(word, id);
  words_.push_back(std::move(word));
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens, int min_count) {
  Vocabulary v;
  if (tokens.size() < v.words_.size() ||
      !std::equal(v.words_.begin(), v.words_.end(), tokens.begin())) {
    throw ContractError("vocabulary must start with <eos> <unk> <PRE> <SUF> <MID>");
  }
  std::size_t i = v.words_.size();
  for (; i < tokens.size() && (tokens[i] == "<A>" || tokens[i] == "<B>"); ++i) v.add(tokens[i]);
  v.n_special_ = v.words_.size();
  for (; i < tokens.size(); ++i) {
    if (v.index_.count(tokens[i])) throw ContractError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  v.min_count_ = min_count;
  return v;
}

WordId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

std::optional<WordId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::word(WordId id) const {
  if (id >= words_.size()) throw ContractError("word id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::vector<WordId> Vocabulary::content_ids() const {
  std::vector<WordId> out;
  for (auto i = static_cast<WordId>(n_special_); i < words_.size(); ++i) out.push_back(i);
  return out;
}

std::vector<WordId> Vocabulary::map(const std::vector<std::string>& words) const {
  std::vector<WordId> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& w : words_) out << w << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(tokens);
}

Vocabulary build_vocab(const Corpus& corpus, int min_count, bool speaker_tags) {
  if (corpus.empty() || corpus.token_count() == 0) throw ContractError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& u : corpus.utterances) {
    for (const auto& t : u.tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : freq) {
    if (static_cast<long long>(c) >= min_count) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const Vocabulary reserved;
  std::vector<std::string> tokens(reserved.tokens());
  if (speaker_tags) {
    tokens.push_back("<A>");
    tokens.push_back("<B>");
  }
  for (auto& [w, c] : kept) {
    if (w == "<A>" || w == "<B>" || reserved.contains(w)) continue;
    tokens.push_back(w);
  }
  return Vocabulary::from_tokens(tokens, min_count);
}

}  // namespace ctxpred
