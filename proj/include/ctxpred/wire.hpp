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

#ifndef CTXPRED_WIRE_HPP_
#define CTXPRED_WIRE_HPP_

// JSON scoring protocol shared with out-of-process scorers.
//
// Request:  {"mode": "forward"|"infill", "pre": [str], "suf": [str],
//            "candidates": [str], "order": "pre_first"|"suf_first"}
// Response: {"logprobs": {str: float}, "model_id": str}
//
// Over HTTP the request is POSTed to /score; malformed requests get 4xx and
// backend faults 5xx. In stdio mode each request and response is one line.
// "order" is optional and defaults to "pre_first".

#include <chrono>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxpred/gateway.hpp"

namespace ctxpred::wire {

// Request rejected by the server side; maps to HTTP 400.
class RequestError : public Error {
 public:
  using Error::Error;
};

nlohmann::json encode_request(const ScoreRequest& req);
ScoreRequest decode_request(const nlohmann::json& j);  // throws RequestError

// Server side of the protocol over any in-process backend.
nlohmann::json handle_request(Backend& backend, const nlohmann::json& request);

// Answers one request per input line until EOF. Errors are reported as
// {"error": str, "status": int} lines.
void serve_stdio(Backend& backend, std::istream& in, std::ostream& out);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{50};
};

// Client side. The vocabulary is the shared token list exported by the
// primary tokenizer. The candidate space is <eos>, <unk> when min_count > 1,
// and the content words, matching an n-gram model over the same vocabulary.
class WireBackend : public Backend {
 public:
  WireBackend(Vocabulary vocab, RetryPolicy retry);

  std::string id() const override;
  const Vocabulary& vocab() const override { return vocab_; }
  const std::vector<std::string>& candidate_space() const override { return space_; }
  std::vector<double> score(const ScoreRequest& req) override;

 protected:
  // One round trip; throws TransportError (retried) or ProtocolError.
  virtual nlohmann::json exchange(const nlohmann::json& request) = 0;
  virtual std::string endpoint() const = 0;

 private:
  Vocabulary vocab_;
  std::vector<std::string> space_;
  RetryPolicy retry_;
  mutable std::mutex id_mu_;
  mutable std::string model_id_;
};

class HttpBackend final : public WireBackend {
 public:
  // url: http://host:port
  HttpBackend(std::string url, Vocabulary vocab, RetryPolicy retry = {},
              std::chrono::seconds timeout = std::chrono::seconds(30));

 protected:
  nlohmann::json exchange(const nlohmann::json& request) override;
  std::string endpoint() const override { return url_; }

 private:
  std::string url_;
  std::chrono::seconds timeout_;
};

// Spawns `command` through /bin/sh and talks line-delimited JSON over its
// stdin/stdout. A dead child is restarted on the next attempt.
class StdioBackend final : public WireBackend {
 public:
  StdioBackend(std::string command, Vocabulary vocab, RetryPolicy retry = {});
  ~StdioBackend() override;

 protected:
  nlohmann::json exchange(const nlohmann::json& request) override;
  std::string endpoint() const override { return "stdio:" + command_; }

 private:
  struct Process;
  std::string command_;
  std::mutex mu_;
  std::unique_ptr<Process> proc_;
};

// Blocking HTTP server answering POST /score; returns when stop() is called
// on the handle from another thread.
class HttpServer {
 public:
  explicit HttpServer(Backend& backend);
  ~HttpServer();
  // Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  void listen();  // blocks
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ctxpred::wire

#endif  // CTXPRED_WIRE_HPP_
