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

// Prompt construction and echo-mode log-probability scoring. Nothing in here
// ever asks a model to generate: the response is appended to the prompt and
// the backend only reports the log-probabilities of the prompt's own tokens.

#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dpobench {

// Bumped whenever render_prompt changes; part of every DPO cache key.
inline constexpr std::string_view kTemplateVersion = "qa-v1";

struct Demonstration {
  std::string question;
  std::string answer;
};

struct PromptParts {
  std::optional<Demonstration> demonstration;
  std::string target_question;
  std::string target_response;
};

// "Q: {demo q}\nA: {demo a}\nQ: {q}\nA: {r}", or "Q: {q}\nA: {r}" without a
// demonstration.
std::string render_prompt(const PromptParts& parts);

// Character offset at which target_response starts in render_prompt(parts).
std::size_t response_boundary(const PromptParts& parts);

struct TokenLogprob {
  std::string text;
  std::size_t offset = 0;  // byte offset of the token's first character
  double logprob = 0.0;    // natural log
};

struct LogprobResult {
  double total_logprob = 0.0;
  std::size_t token_count = 0;
  std::string backend_id;
  std::string prompt_hash;

  bool operator==(const LogprobResult&) const = default;
};

// Echo-logprob contract shared by the HTTP client and the synthetic model.
// Implementations must be safe to call concurrently.
class LogprobBackend {
 public:
  virtual ~LogprobBackend() = default;
  virtual std::string id() const = 0;
  // Per-token log-probabilities of `prompt` itself, in prompt order.
  virtual std::vector<TokenLogprob> echo_logprobs(const std::string& prompt) const = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
};

// Tokens belonging to the response. A token is selected when it starts at or
// after `boundary`; the first one may also start one character early (it then
// owns the template's trailing space) as long as it extends past the boundary.
std::vector<TokenLogprob> select_response_tokens(std::span<const TokenLogprob> tokens,
                                                 std::size_t boundary);

// Scores parts.target_response: sums the echo logprobs of exactly the
// response tokens. Transport errors are retried per `retry`; context-length
// and protocol errors propagate immediately. A zero-probability token is a
// DataError.
LogprobResult score_response(const LogprobBackend& backend, const PromptParts& parts,
                             const RetryPolicy& retry = {});

// Stable 64-bit FNV-1a of the prompt, hex encoded.
std::string prompt_hash(std::string_view prompt);

// Calls `fn` with bounded retries and exponential backoff on retryable
// BackendErrors.
template <typename Fn>
auto with_retries(const RetryPolicy& retry, Fn&& fn) -> decltype(fn());

// Token bucket shared by every network client of one endpoint.
class RateLimiter {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  // `rate_per_second` <= 0 disables limiting.
  explicit RateLimiter(double rate_per_second, double burst = 1.0,
                       Clock clock = [] { return std::chrono::steady_clock::now(); });

  // Takes `cost` tokens if available without waiting.
  bool try_acquire(double cost = 1.0);
  // Blocks until `cost` tokens are available.
  void acquire(double cost = 1.0);

 private:
  void refill_locked();

  double rate_;
  double burst_;
  double tokens_;
  Clock clock_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

}  // namespace dpobench

#include "dpobench/llm_gateway_inl.hpp"
