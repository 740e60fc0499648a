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

#pragma once

#include <stdexcept>
#include <string>

namespace dpobench {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data or a violated data invariant. Maps to CLI exit code 1.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Any failure talking to an LLM, embedding or rerank backend. Exit code 2.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what, bool retryable = false)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// Connection reset, timeout, 5xx. Retried with backoff.
class TransportError : public BackendError {
 public:
  explicit TransportError(const std::string& what) : BackendError(what, true) {}
};

// Prompt does not fit the backend's context window. Never retried.
class ContextLengthError : public BackendError {
 public:
  explicit ContextLengthError(const std::string& what)
      : BackendError(what, false) {}
};

// The backend answered, but not with echo logprobs for the prompt.
class ProtocolError : public BackendError {
 public:
  explicit ProtocolError(const std::string& what)
      : BackendError(what, false) {}
};

// The DPO budget ran out before a required evaluation. Exit code 3.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace dpobench
