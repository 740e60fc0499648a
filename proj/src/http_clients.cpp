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

#include "dpobench/http_clients.hpp"

#include <cmath>
#include <numbers>

#include <httplib.h>

namespace dpobench {

using nlohmann::json;

namespace {

bool mentions_context_length(const std::string& body) {
  return body.find("context_length") != std::string::npos ||
         body.find("maximum context") != std::string::npos;
}

std::shared_ptr<RateLimiter> make_limiter(const HttpEndpointConfig& c) {
  return std::make_shared<RateLimiter>(c.rate_per_second, c.burst);
}

void require_url(const HttpEndpointConfig& c) {
  if (c.base_url.empty()) throw ConfigError("endpoint base_url is empty");
  if (c.path.empty() || c.path.front() != '/') throw ConfigError("endpoint path must start with '/'");
}

}  // namespace

json post_json(const HttpEndpointConfig& endpoint, const json& body) {
  httplib::Client client(endpoint.base_url);
  if (!client.is_valid()) throw ConfigError("invalid endpoint url '" + endpoint.base_url + "'");
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  const auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
  const std::string where = endpoint.base_url + endpoint.path;
  if (!res) {
    throw TransportError(where + ": " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 429 || status >= 500) {
    throw TransportError(where + ": HTTP " + std::to_string(status));
  }
  if (status == 413 || (status >= 400 && mentions_context_length(res->body))) {
    throw ContextLengthError(where + ": prompt exceeds the context window");
  }
  if (status < 200 || status >= 300) {
    throw BackendError(where + ": HTTP " + std::to_string(status) + ": " +
                       res->body.substr(0, 200));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw ProtocolError(where + ": unparseable reply: " + e.what());
  }
}

std::vector<TokenLogprob> parse_echo_reply(const json& reply) {
  try {
    std::vector<TokenLogprob> tokens;
    if (reply.contains("tokens")) {
      double scale = 1.0;
      const std::string base = reply.value("logprob_base", std::string("e"));
      if (base == "2") {
        scale = std::numbers::ln2;
      } else if (base == "10") {
        scale = std::numbers::ln10;
      } else if (base != "e") {
        throw ProtocolError("unknown logprob_base '" + base + "'");
      }
      for (const auto& t : reply.at("tokens")) {
        tokens.push_back({t.at("text").get<std::string>(), t.at("offset").get<std::size_t>(),
                          t.at("logprob").get<double>() * scale});
      }
      return tokens;
    }
    const json& lp = reply.at("choices").at(0).at("logprobs");
    const json& text = lp.at("tokens");
    const json& values = lp.at("token_logprobs");
    const json& offsets = lp.at("text_offset");
    if (text.size() != values.size() || text.size() != offsets.size()) {
      throw ProtocolError("logprob arrays differ in length");
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
      double v = 0.0;
      if (values[i].is_null()) {
        if (i != 0) throw ProtocolError("null logprob after the first token");
      } else {
        v = values[i].get<double>();
      }
      tokens.push_back({text[i].get<std::string>(), offsets[i].get<std::size_t>(), v});
    }
    return tokens;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed echo reply: ") + e.what());
  }
}

HttpEchoBackend::HttpEchoBackend(HttpEndpointConfig config)
    : config_(std::move(config)), limiter_(make_limiter(config_)) {
  if (config_.path.empty()) config_.path = "/v1/completions";
  require_url(config_);
  if (config_.model.empty()) throw ConfigError("echo backend needs a model name");
}

std::vector<TokenLogprob> HttpEchoBackend::echo_logprobs(const std::string& prompt) const {
  limiter_->acquire();
  const json reply = post_json(config_, {{"model", config_.model},
                                         {"prompt", prompt},
                                         {"echo", true},
                                         {"logprobs", true},
                                         {"max_tokens", 0}});
  return parse_echo_reply(reply);
}

HttpEmbeddingEndpoint::HttpEmbeddingEndpoint(HttpEndpointConfig config)
    : config_(std::move(config)), limiter_(make_limiter(config_)) {
  if (config_.path.empty()) config_.path = "/v1/embeddings";
  require_url(config_);
}

std::vector<std::vector<float>> HttpEmbeddingEndpoint::embed(
    std::span<const std::string> texts) const {
  limiter_->acquire();
  const json reply = post_json(
      config_, {{"model", config_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}});
  try {
    std::vector<std::vector<float>> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    for (const auto& item : reply.at("data")) {
      const auto i = item.at("index").get<std::size_t>();
      if (i >= texts.size() || seen[i]) throw ProtocolError("embedding reply has a bad index");
      seen[i] = true;
      out[i] = item.at("embedding").get<std::vector<float>>();
    }
    for (bool s : seen) {
      if (!s) throw ProtocolError("embedding reply is missing an input");
    }
    return out;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed embedding reply: ") + e.what());
  }
}

HttpRerankEndpoint::HttpRerankEndpoint(HttpEndpointConfig config)
    : config_(std::move(config)), limiter_(make_limiter(config_)) {
  if (config_.path.empty()) config_.path = "/v1/rerank";
  require_url(config_);
}

std::vector<double> HttpRerankEndpoint::rerank(const std::string& query,
                                               std::span<const std::string> documents) const {
  limiter_->acquire();
  const json reply =
      post_json(config_, {{"model", config_.model},
                          {"query", query},
                          {"documents", std::vector<std::string>(documents.begin(), documents.end())}});
  try {
    std::vector<double> out(documents.size(), std::nan(""));
    for (const auto& item : reply.at("results")) {
      const auto i = item.at("index").get<std::size_t>();
      if (i >= documents.size()) throw ProtocolError("rerank reply has a bad index");
      out[i] = item.at("relevance_score").get<double>();
    }
    for (double v : out) {
      if (!std::isfinite(v)) throw ProtocolError("rerank reply is missing a document");
    }
    return out;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed rerank reply: ") + e.what());
  }
}

}  // namespace dpobench
