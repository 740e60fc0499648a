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

// A deterministic stand-in for a hosted LLM. It parses the QA template back
// out of the prompt and assigns each response token a hashed base
// probability. When a demonstration is present, the first response token is
// shifted by gain * u(q, d), where u is a closed-form utility field. Every
// other token is identical with and without the demonstration, so the true
// DPO of a pair is log sigmoid((correct_gain + incorrect_gain) * u(q, d)).

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dpobench/llm_gateway.hpp"

namespace dpobench {

enum class UtilityKind { kZero, kConstant, kLatentCosine };

struct UtilityField {
  UtilityKind kind = UtilityKind::kZero;
  // kConstant: u = constant, |constant| <= 1.
  double constant = 0.0;
  // kLatentCosine: u = tanh(sharpness * sign * cos(z_q, z_d) + offset).
  double sharpness = 1.0;
  double sign = 1.0;
  double offset = 0.0;
  // Keyed by question text. Missing latents give u = 0.
  std::map<std::string, Eigen::VectorXd> latents;
};

struct SyntheticLmSpec {
  std::uint64_t seed = 0;
  std::string model_id = "synthetic-lm";
  double min_token_prob = 0.01;
  double max_token_prob = 0.12;
  // Logit shift per unit utility, for the correct and incorrect responses.
  double correct_gain = 2.0;
  double incorrect_gain = 2.0;
  UtilityField utility;
  // Question text -> correct answer text.
  std::map<std::string, std::string> answer_key;
  std::size_t max_prompt_bytes = 1 << 16;
};

// Throws ConfigError unless every token logprob stays <= 0 for all |u| <= 1.
void validate(const SyntheticLmSpec& spec);

// The closed-form utility the backend applies, in [-1, 1].
double synthetic_utility(const SyntheticLmSpec& spec, const std::string& query_question,
                         const std::string& demo_question);

// Whitespace-attached word pieces: "\n", " word", "word", or one punctuation
// character. Offsets index into `text`.
std::vector<TokenLogprob> synthetic_tokenize(std::string_view text);

class SyntheticLm final : public LogprobBackend {
 public:
  explicit SyntheticLm(SyntheticLmSpec spec);

  std::string id() const override { return spec_.model_id; }
  std::vector<TokenLogprob> echo_logprobs(const std::string& prompt) const override;

  const SyntheticLmSpec& spec() const { return spec_; }

 private:
  double base_logprob(std::string_view label, std::string_view context) const;

  SyntheticLmSpec spec_;
};

std::shared_ptr<const SyntheticLm> make_synthetic_backend(SyntheticLmSpec spec);

nlohmann::json to_json(const SyntheticLmSpec& spec);
SyntheticLmSpec synthetic_spec_from_json(const nlohmann::json& j);

}  // namespace dpobench
