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

#include "dpobench/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dpobench/errors.hpp"
#include "dpobench/rng.hpp"

namespace dpobench {
namespace {

std::string render_prefix(const PromptParts& parts) {
  std::string out;
  if (parts.demonstration) {
    out += "Q: ";
    out += parts.demonstration->question;
    out += "\nA: ";
    out += parts.demonstration->answer;
    out += '\n';
  }
  out += "Q: ";
  out += parts.target_question;
  out += "\nA: ";
  return out;
}

// Logprobs within this distance above zero are rounding noise from the host.
constexpr double kPositiveLogprobSlack = 1e-9;

}  // namespace

std::string render_prompt(const PromptParts& parts) {
  return render_prefix(parts) + parts.target_response;
}

std::size_t response_boundary(const PromptParts& parts) {
  return render_prefix(parts).size();
}

std::vector<TokenLogprob> select_response_tokens(std::span<const TokenLogprob> tokens,
                                                 std::size_t boundary) {
  std::vector<TokenLogprob> out;
  for (const auto& tok : tokens) {
    const std::size_t end = tok.offset + tok.text.size();
    const bool inside = tok.offset >= boundary;
    const bool owns_space = out.empty() && boundary > 0 &&
                            tok.offset + 1 == boundary && end > boundary;
    if (inside || owns_space) out.push_back(tok);
  }
  return out;
}

LogprobResult score_response(const LogprobBackend& backend, const PromptParts& parts,
                             const RetryPolicy& retry) {
  const std::string prompt = render_prompt(parts);
  const std::size_t boundary = response_boundary(parts);
  const std::vector<TokenLogprob> tokens =
      with_retries(retry, [&] { return backend.echo_logprobs(prompt); });

  if (tokens.empty()) throw ProtocolError(backend.id() + ": empty echo");
  std::size_t covered = 0;
  std::size_t last_offset = 0;
  for (const auto& tok : tokens) {
    if (tok.offset < last_offset) {
      throw ProtocolError(backend.id() + ": token offsets out of order");
    }
    last_offset = tok.offset;
    covered = std::max(covered, tok.offset + tok.text.size());
  }
  if (covered > prompt.size()) {
    throw ProtocolError(backend.id() +
                        ": backend returned generated tokens beyond the prompt");
  }
  if (covered < prompt.size()) {
    throw ProtocolError(backend.id() + ": echo does not cover the whole prompt");
  }

  const std::vector<TokenLogprob> response = select_response_tokens(tokens, boundary);
  if (response.empty()) {
    throw DataError("response '" + parts.target_response + "' has no tokens");
  }
  LogprobResult result;
  result.backend_id = backend.id();
  result.prompt_hash = prompt_hash(prompt);
  result.token_count = response.size();
  for (const auto& tok : response) {
    if (std::isnan(tok.logprob) || tok.logprob > kPositiveLogprobSlack) {
      throw ProtocolError(backend.id() + ": invalid logprob for token '" +
                          tok.text + "'");
    }
    if (std::isinf(tok.logprob)) {
      throw DataError(backend.id() + ": zero-probability token '" + tok.text +
                      "' in response");
    }
    result.total_logprob += std::min(tok.logprob, 0.0);
  }
  return result;
}

std::string prompt_hash(std::string_view prompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(prompt)));
  return buf;
}

RateLimiter::RateLimiter(double rate_per_second, double burst, Clock clock)
    : rate_(rate_per_second),
      burst_(std::max(burst, 1.0)),
      tokens_(std::max(burst, 1.0)),
      clock_(std::move(clock)),
      last_(clock_()) {}

void RateLimiter::refill_locked() {
  const auto now = clock_();
  const double elapsed = std::chrono::duration<double>(now - last_).count();
  last_ = now;
  tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
}

bool RateLimiter::try_acquire(double cost) {
  if (rate_ <= 0) return true;
  std::lock_guard lock(mu_);
  refill_locked();
  if (tokens_ + 1e-12 < cost) return false;
  tokens_ -= cost;
  return true;
}

void RateLimiter::acquire(double cost) {
  if (rate_ <= 0) return;
  while (true) {
    double wait_s;
    {
      std::lock_guard lock(mu_);
      refill_locked();
      if (tokens_ + 1e-12 >= cost) {
        tokens_ -= cost;
        return;
      }
      wait_s = (cost - tokens_) / rate_;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

}  // namespace dpobench
