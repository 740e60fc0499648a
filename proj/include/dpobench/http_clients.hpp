/*
 * Copyright 2026 The dpobench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// HTTP clients for hosted backends. Logprobs are converted to natural log at
// this edge; status and transport failures map onto the BackendError family.

#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpobench/llm_gateway.hpp"
#include "dpobench/retrievers.hpp"

namespace dpobench {

struct HttpEndpointConfig {
  // scheme://host[:port], e.g. "http://127.0.0.1:8080".
  std::string base_url;
  std::string path;
  std::string model;
  // Sent as "Authorization: Bearer ..." when non-empty.
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  // Requests per second; <= 0 disables limiting.
  double rate_per_second = 0.0;
  double burst = 1.0;
};

// POSTs `body` as JSON and returns the parsed JSON reply. Connection
// failures, 429 and 5xx are TransportErrors, 413 or a context-length message
// is a ContextLengthError, other non-2xx statuses are non-retryable
// BackendErrors and an unparseable body is a ProtocolError.
nlohmann::json post_json(const HttpEndpointConfig& endpoint, const nlohmann::json& body);

// Echo-logprob completions. Request: {model, prompt, echo: true, logprobs:
// true, max_tokens: 0}. Accepted replies: {"tokens": [{text, offset,
// logprob}], "logprob_base": "e" | "2" | "10"} or the legacy completions
// shape choices[0].logprobs.{tokens, token_logprobs, text_offset}, where a
// null logprob on the very first token reads as 0.
class HttpEchoBackend final : public LogprobBackend {
 public:
  explicit HttpEchoBackend(HttpEndpointConfig config);

  std::string id() const override { return config_.model; }
  std::vector<TokenLogprob> echo_logprobs(const std::string& prompt) const override;

 private:
  HttpEndpointConfig config_;
  std::shared_ptr<RateLimiter> limiter_;
};

std::vector<TokenLogprob> parse_echo_reply(const nlohmann::json& reply);

// {model, input: [texts]} -> {"data": [{"index", "embedding"}]}.
class HttpEmbeddingEndpoint final : public EmbeddingEndpoint {
 public:
  explicit HttpEmbeddingEndpoint(HttpEndpointConfig config);

  std::string model_id() const override { return config_.model; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;

 private:
  HttpEndpointConfig config_;
  std::shared_ptr<RateLimiter> limiter_;
};

// {model, query, documents} -> {"results": [{"index", "relevance_score"}]}.
class HttpRerankEndpoint final : public RerankEndpoint {
 public:
  explicit HttpRerankEndpoint(HttpEndpointConfig config);

  std::string model_id() const override { return config_.model; }
  std::vector<double> rerank(const std::string& query,
                             std::span<const std::string> documents) const override;

 private:
  HttpEndpointConfig config_;
  std::shared_ptr<RateLimiter> limiter_;
};

}  // namespace dpobench
