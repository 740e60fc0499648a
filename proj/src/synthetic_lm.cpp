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

#include "dpobench/synthetic_lm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

#include "dpobench/errors.hpp"
#include "dpobench/rng.hpp"

namespace dpobench {
namespace {

using nlohmann::json;

bool word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

struct ParsedPrompt {
  std::string question;
  std::optional<std::string> demo_question;
  std::size_t response_start = 0;
};

std::optional<ParsedPrompt> parse_template(const std::string& prompt) {
  const std::size_t a_pos = prompt.rfind("\nA: ");
  if (a_pos == std::string::npos) return std::nullopt;
  ParsedPrompt parsed;
  parsed.response_start = a_pos + 4;
  const std::size_t q_pos = a_pos == 0 ? std::string::npos : prompt.rfind("\nQ: ", a_pos - 1);
  if (q_pos == std::string::npos) {
    if (prompt.rfind("Q: ", 0) != 0) return std::nullopt;
    parsed.question = prompt.substr(3, a_pos - 3);
    return parsed;
  }
  parsed.question = prompt.substr(q_pos + 4, a_pos - q_pos - 4);
  const std::string demo = prompt.substr(0, q_pos);
  const std::size_t demo_a = demo.find("\nA: ");
  if (demo.rfind("Q: ", 0) != 0 || demo_a == std::string::npos) return std::nullopt;
  parsed.demo_question = demo.substr(3, demo_a - 3);
  return parsed;
}

const char* utility_kind_name(UtilityKind k) {
  switch (k) {
    case UtilityKind::kZero: return "zero";
    case UtilityKind::kConstant: return "constant";
    case UtilityKind::kLatentCosine: return "latent_cosine";
  }
  return "zero";
}

UtilityKind utility_kind_from_name(const std::string& s) {
  if (s == "zero") return UtilityKind::kZero;
  if (s == "constant") return UtilityKind::kConstant;
  if (s == "latent_cosine") return UtilityKind::kLatentCosine;
  throw ConfigError("unknown utility kind '" + s + "'");
}

}  // namespace

void validate(const SyntheticLmSpec& spec) {
  if (!(spec.min_token_prob > 0 && spec.min_token_prob <= spec.max_token_prob &&
        spec.max_token_prob < 1)) {
    throw ConfigError("synthetic LM token probabilities must satisfy 0 < min <= max < 1");
  }
  if (spec.correct_gain < 0 || spec.incorrect_gain < 0) {
    throw ConfigError("synthetic LM gains must be non-negative");
  }
  const double gain = std::max(spec.correct_gain, spec.incorrect_gain);
  if (std::log(spec.max_token_prob) + gain > 0) {
    throw ConfigError("synthetic LM gain would push a token logprob above zero");
  }
  if (spec.utility.kind == UtilityKind::kConstant && std::abs(spec.utility.constant) > 1) {
    throw ConfigError("constant utility must lie in [-1, 1]");
  }
}

double synthetic_utility(const SyntheticLmSpec& spec, const std::string& query_question,
                         const std::string& demo_question) {
  const UtilityField& field = spec.utility;
  switch (field.kind) {
    case UtilityKind::kZero:
      return 0.0;
    case UtilityKind::kConstant:
      return field.constant;
    case UtilityKind::kLatentCosine: {
      auto q = field.latents.find(query_question);
      auto d = field.latents.find(demo_question);
      if (q == field.latents.end() || d == field.latents.end()) return 0.0;
      const double denom = q->second.norm() * d->second.norm();
      if (denom == 0) return 0.0;
      const double cos = q->second.dot(d->second) / denom;
      return std::tanh(field.sharpness * field.sign * cos + field.offset);
    }
  }
  return 0.0;
}

std::vector<TokenLogprob> synthetic_tokenize(std::string_view text) {
  std::vector<TokenLogprob> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto word_end = [&](std::size_t j) {
    while (j < n && word_char(static_cast<unsigned char>(text[j]))) ++j;
    return j;
  };
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t end;
    if (c == ' ' && i + 1 < n && word_char(static_cast<unsigned char>(text[i + 1]))) {
      end = word_end(i + 1);
    } else if (word_char(c)) {
      end = word_end(i);
    } else {
      end = i + 1;
    }
    tokens.push_back({std::string(text.substr(i, end - i)), i, 0.0});
    i = end;
  }
  return tokens;
}

SyntheticLm::SyntheticLm(SyntheticLmSpec spec) : spec_(std::move(spec)) { validate(spec_); }

double SyntheticLm::base_logprob(std::string_view label, std::string_view context) const {
  const std::uint64_t h = fnv1a64(context, fnv1a64(label, splitmix64(spec_.seed)));
  const double p = spec_.min_token_prob +
                   (spec_.max_token_prob - spec_.min_token_prob) * unit_from_bits(splitmix64(h));
  return std::log(p);
}

std::vector<TokenLogprob> SyntheticLm::echo_logprobs(const std::string& prompt) const {
  if (prompt.size() > spec_.max_prompt_bytes) {
    throw ContextLengthError(spec_.model_id + ": prompt of " + std::to_string(prompt.size()) +
                             " bytes exceeds the context limit");
  }
  std::vector<TokenLogprob> tokens = synthetic_tokenize(prompt);
  const std::optional<ParsedPrompt> parsed = parse_template(prompt);

  double first_token_shift = 0.0;
  if (parsed && parsed->demo_question) {
    auto key = spec_.answer_key.find(parsed->question);
    if (key != spec_.answer_key.end()) {
      const double u = synthetic_utility(spec_, parsed->question, *parsed->demo_question);
      const bool correct = prompt.compare(parsed->response_start, std::string::npos,
                                          key->second) == 0;
      first_token_shift = correct ? spec_.correct_gain * u : -spec_.incorrect_gain * u;
    }
  }

  bool first = true;
  for (auto& tok : tokens) {
    const std::size_t end = tok.offset + tok.text.size();
    if (parsed && end > parsed->response_start) {
      // Causal in the response: depends on the target question and the
      // response prefix only, never on the demonstration.
      std::string context = parsed->question;
      context.push_back('\x1f');
      context.append(prompt, parsed->response_start, end - parsed->response_start);
      tok.logprob = base_logprob("response", context);
      if (first) tok.logprob += first_token_shift;
      first = false;
    } else {
      tok.logprob = base_logprob("prompt", std::string_view(prompt).substr(0, end));
    }
  }
  return tokens;
}

std::shared_ptr<const SyntheticLm> make_synthetic_backend(SyntheticLmSpec spec) {
  return std::make_shared<const SyntheticLm>(std::move(spec));
}

json to_json(const SyntheticLmSpec& spec) {
  json latents = json::object();
  for (const auto& [text, z] : spec.utility.latents) {
    latents[text] = std::vector<double>(z.data(), z.data() + z.size());
  }
  return json{
      {"seed", spec.seed},
      {"model_id", spec.model_id},
      {"min_token_prob", spec.min_token_prob},
      {"max_token_prob", spec.max_token_prob},
      {"correct_gain", spec.correct_gain},
      {"incorrect_gain", spec.incorrect_gain},
      {"max_prompt_bytes", spec.max_prompt_bytes},
      {"answer_key", spec.answer_key},
      {"utility",
       {{"kind", utility_kind_name(spec.utility.kind)},
        {"constant", spec.utility.constant},
        {"sharpness", spec.utility.sharpness},
        {"sign", spec.utility.sign},
        {"offset", spec.utility.offset},
        {"latents", latents}}},
  };
}

SyntheticLmSpec synthetic_spec_from_json(const json& j) {
  SyntheticLmSpec spec;
  try {
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.model_id = j.value("model_id", spec.model_id);
    spec.min_token_prob = j.value("min_token_prob", spec.min_token_prob);
    spec.max_token_prob = j.value("max_token_prob", spec.max_token_prob);
    spec.correct_gain = j.value("correct_gain", spec.correct_gain);
    spec.incorrect_gain = j.value("incorrect_gain", spec.incorrect_gain);
    spec.max_prompt_bytes = j.value("max_prompt_bytes", spec.max_prompt_bytes);
    spec.answer_key = j.value("answer_key", spec.answer_key);
    if (j.contains("utility")) {
      const json& u = j.at("utility");
      spec.utility.kind = utility_kind_from_name(u.value("kind", std::string("zero")));
      spec.utility.constant = u.value("constant", 0.0);
      spec.utility.sharpness = u.value("sharpness", 1.0);
      spec.utility.sign = u.value("sign", 1.0);
      spec.utility.offset = u.value("offset", 0.0);
      if (u.contains("latents")) {
        for (const auto& [text, arr] : u.at("latents").items()) {
          const auto v = arr.get<std::vector<double>>();
          spec.utility.latents[text] =
              Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic LM spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

}  // namespace dpobench
