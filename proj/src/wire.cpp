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

#include "ctxpred/wire.hpp"

#include <csignal>
#include <istream>
#include <ostream>
#include <thread>

#include <boost/process.hpp>
#include <httplib.h>

namespace ctxpred::wire {

using nlohmann::json;
namespace bp = boost::process;

json encode_request(const ScoreRequest& req) {
  if (req.mode == ScoreMode::Backward) throw ContractError("backward mode is not part of the wire protocol");
  return json{{"mode", req.mode == ScoreMode::Forward ? "forward" : "infill"},
              {"pre", req.pre},
              {"suf", req.suf},
              {"candidates", req.candidates},
              {"order", req.suffix_first ? "suf_first" : "pre_first"}};
}

namespace {

std::vector<std::string> strings(const json& j, const char* field, bool required) {
  if (!j.contains(field)) {
    if (required) throw RequestError(std::string("missing field '") + field + "'");
    return {};
  }
  const auto& a = j[field];
  if (!a.is_array()) throw RequestError(std::string("'") + field + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : a) {
    if (!e.is_string()) throw RequestError(std::string("'") + field + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

ScoreRequest decode_request(const json& j) {
  if (!j.is_object()) throw RequestError("request must be a JSON object");
  if (!j.contains("mode") || !j["mode"].is_string()) throw RequestError("missing field 'mode'");
  ScoreRequest req;
  const auto mode = j["mode"].get<std::string>();
  if (mode == "forward") {
    req.mode = ScoreMode::Forward;
  } else if (mode == "infill") {
    req.mode = ScoreMode::Infill;
  } else {
    throw RequestError("unknown mode '" + mode + "'");
  }
  req.pre = strings(j, "pre", false);
  req.suf = strings(j, "suf", false);
  req.candidates = strings(j, "candidates", true);
  if (req.candidates.empty()) throw RequestError("'candidates' must be non-empty");
  if (j.contains("order")) {
    if (j["order"] == "suf_first") {
      req.suffix_first = true;
    } else if (j["order"] != "pre_first") {
      throw RequestError("'order' must be \"pre_first\" or \"suf_first\"");
    }
  }
  return req;
}

json handle_request(Backend& backend, const json& request) {
  const auto req = decode_request(request);
  const auto lp = backend.score(req);
  json logprobs = json::object();
  for (std::size_t i = 0; i < req.candidates.size(); ++i) logprobs[req.candidates[i]] = lp[i];
  return json{{"logprobs", std::move(logprobs)}, {"model_id", backend.id()}};
}

void serve_stdio(Backend& backend, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json resp;
    try {
      resp = handle_request(backend, json::parse(line));
    } catch (const json::exception& e) {
      resp = json{{"error", std::string("malformed JSON: ") + e.what()}, {"status", 400}};
    } catch (const RequestError& e) {
      resp = json{{"error", e.what()}, {"status", 400}};
    } catch (const std::exception& e) {
      resp = json{{"error", e.what()}, {"status", 500}};
    }
    out << resp.dump() << std::endl;
  }
}

// --- client ---

namespace {

// Same outcome set as an n-gram model trained with this vocabulary: <unk>
// only when a frequency threshold can have produced unknown words.
std::vector<std::string> outcome_words(const Vocabulary& v) {
  std::vector<std::string> out{std::string(Vocabulary::kEos)};
  if (v.min_count() > 1) out.emplace_back(Vocabulary::kUnk);
  for (WordId w : v.content_ids()) out.push_back(v.word(w));
  return out;
}

}  // namespace

WireBackend::WireBackend(Vocabulary vocab, RetryPolicy retry)
    : vocab_(std::move(vocab)), space_(outcome_words(vocab_)), retry_(retry) {}

std::string WireBackend::id() const {
  std::lock_guard lock(id_mu_);
  if (model_id_.empty()) {
    // Probe once so cache keys name the model actually served.
    ScoreRequest probe{ScoreMode::Forward, {}, {}, {std::string(Vocabulary::kEos)}, false};
    auto* self = const_cast<WireBackend*>(this);
    json resp;
    for (int attempt = 0;; ++attempt) {
      try {
        resp = self->exchange(encode_request(probe));
        break;
      } catch (const TransportError&) {
        if (attempt + 1 >= retry_.attempts) throw;
        std::this_thread::sleep_for(retry_.backoff * (1 << attempt));
      }
    }
    if (!resp.contains("model_id") || !resp["model_id"].is_string()) {
      throw ProtocolError("response lacks 'model_id'");
    }
    model_id_ = resp["model_id"].get<std::string>();
  }
  std::string vocab_text;
  for (const auto& w : vocab_.tokens()) vocab_text += w + '\n';
  return "wire:" + endpoint() + ":" + model_id_ + ":" + sha256_hex(vocab_text).substr(0, 16);
}

std::vector<double> WireBackend::score(const ScoreRequest& req) {
  const auto body = encode_request(req);
  json resp;
  for (int attempt = 0;; ++attempt) {
    try {
      resp = exchange(body);
      break;
    } catch (const TransportError&) {
      if (attempt + 1 >= retry_.attempts) throw;
      std::this_thread::sleep_for(retry_.backoff * (1 << attempt));
    }
  }
  if (!resp.contains("logprobs") || !resp["logprobs"].is_object()) {
    throw ProtocolError("response lacks a 'logprobs' object");
  }
  const auto& lp = resp["logprobs"];
  std::vector<double> out;
  out.reserve(req.candidates.size());
  for (const auto& c : req.candidates) {
    auto it = lp.find(c);
    if (it == lp.end() || !it->is_number()) throw ProtocolError("response has no score for '" + c + "'");
    out.push_back(it->get<double>());
  }
  return out;
}

// --- HTTP ---

HttpBackend::HttpBackend(std::string url, Vocabulary vocab, RetryPolicy retry, std::chrono::seconds timeout)
    : WireBackend(std::move(vocab), retry), url_(std::move(url)), timeout_(timeout) {}

json HttpBackend::exchange(const json& request) {
  httplib::Client cli(url_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  auto res = cli.Post("/score", request.dump(), "application/json");
  if (!res) throw TransportError("http backend " + url_ + ": " + httplib::to_string(res.error()));
  if (res->status >= 500) {
    throw TransportError("http backend " + url_ + ": status " + std::to_string(res->status) + ": " + res->body);
  }
  if (res->status >= 400) {
    throw ProtocolError("http backend " + url_ + ": status " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("http backend returned invalid JSON: ") + e.what());
  }
}

// --- stdio ---

struct StdioBackend::Process {
  bp::opstream to_child;
  bp::ipstream from_child;
  bp::child child;

  // Closing first keeps the pipebuf destructor from flushing into a dead
  // child, which would throw out of a destructor.
  ~Process() {
    to_child.pipe().close();
    from_child.pipe().close();
    std::error_code ec;
    if (child.valid()) child.wait(ec);
  }
};

StdioBackend::StdioBackend(std::string command, Vocabulary vocab, RetryPolicy retry)
    : WireBackend(std::move(vocab), retry), command_(std::move(command)) {
  std::signal(SIGPIPE, SIG_IGN);
}

StdioBackend::~StdioBackend() = default;

json StdioBackend::exchange(const json& request) {
  std::lock_guard lock(mu_);
  std::error_code ec;
  if (!proc_ || !proc_->child.running(ec)) {
    proc_.reset();
    auto p = std::make_unique<Process>();
    try {
      p->child = bp::child("/bin/sh", "-c", command_, bp::std_in<p->to_child, bp::std_out> p->from_child);
    } catch (const bp::process_error& e) {
      throw TransportError("stdio backend '" + command_ + "': " + e.what());
    }
    proc_ = std::move(p);
  }
  proc_->to_child << request.dump() << std::endl;
  std::string line;
  if (!proc_->to_child || !std::getline(proc_->from_child, line)) {
    proc_.reset();
    throw TransportError("stdio backend '" + command_ + "' closed the pipe");
  }
  json resp;
  try {
    resp = json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("stdio backend returned invalid JSON: ") + e.what());
  }
  if (resp.contains("error")) {
    const int status = resp.value("status", 500);
    const auto msg = "stdio backend: " + resp["error"].get<std::string>();
    if (status >= 500) throw TransportError(msg);
    throw ProtocolError(msg);
  }
  return resp;
}

// --- server ---

struct HttpServer::Impl {
  Backend& backend;
  httplib::Server server;
  std::mutex mu;
  explicit Impl(Backend& b) : backend(b) {}
};

HttpServer::HttpServer(Backend& backend) : impl_(std::make_unique<Impl>(backend)) {
  impl_->server.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
    json resp;
    try {
      const auto body = json::parse(req.body);
      std::lock_guard lock(impl_->mu);
      resp = handle_request(impl_->backend, body);
      res.status = 200;
    } catch (const json::exception& e) {
      res.status = 400;
      resp = json{{"error", std::string("malformed JSON: ") + e.what()}};
    } catch (const RequestError& e) {
      res.status = 400;
      resp = json{{"error", e.what()}};
    } catch (const std::exception& e) {
      res.status = 500;
      resp = json{{"error", e.what()}};
    }
    res.set_content(resp.dump(), "application/json");
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace ctxpred::wire
