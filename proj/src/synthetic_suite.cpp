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

#include "dpobench/synthetic_suite.hpp"

#include <cstdio>

#include "dpobench/rng.hpp"

namespace dpobench {
namespace {

std::string numbered(const char* pattern, std::size_t i) {
  char buf[96];
  std::snprintf(buf, sizeof buf, pattern, i);
  return buf;
}

Eigen::VectorXd gaussian(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace

SyntheticSuite make_synthetic_suite(const SyntheticSuiteConfig& config) {
  if (config.n_records < 5) throw ConfigError("synthetic suite needs at least 5 records");
  if (config.latent_dim < 1 || config.embedding_dim < 1) {
    throw ConfigError("synthetic dimensions must be positive");
  }
  SyntheticSuite suite;
  suite.config = config;
  Rng rng(derive_seed(config.seed, "synthetic/suite"));

  Eigen::MatrixXd P(config.embedding_dim, config.latent_dim);
  for (Eigen::Index j = 0; j < P.cols(); ++j) P.col(j) = gaussian(rng, P.rows());
  P /= std::sqrt(static_cast<double>(config.latent_dim));

  const auto n = config.n_records;
  std::vector<std::string> ids;
  EmbeddingMatrix qv(static_cast<Eigen::Index>(n), config.embedding_dim);
  EmbeddingMatrix dv(static_cast<Eigen::Index>(n), config.embedding_dim);
  SyntheticLmSpec& lm = suite.lm;
  lm.seed = derive_seed(config.seed, "synthetic/lm");
  lm.model_id = config.llm_id;
  lm.correct_gain = config.gain;
  lm.incorrect_gain = config.gain;
  lm.utility.kind = UtilityKind::kLatentCosine;
  lm.utility.sharpness = config.sharpness;
  lm.utility.sign = config.sign;
  lm.utility.offset = config.offset;

  for (std::size_t i = 0; i < n; ++i) {
    McqRecord r;
    r.id = numbered("s%04zu", i);
    r.question = numbered("Which token does synthetic item %zu stand for?", i);
    r.answer = numbered("token %zu", i);
    r.incorrect_answers = {numbered("token %zu prime", i), numbered("not token %zu", i)};
    const Eigen::VectorXd z = gaussian(rng, config.latent_dim);
    const Eigen::VectorXd base = P * z;
    const Eigen::VectorXd eq = base + config.embedding_noise * gaussian(rng, config.embedding_dim);
    const Eigen::VectorXd ed = base + config.embedding_noise * gaussian(rng, config.embedding_dim);
    const auto row = static_cast<Eigen::Index>(i);
    qv.row(row) = eq.normalized().cast<float>().transpose();
    dv.row(row) = ed.normalized().cast<float>().transpose();
    lm.utility.latents[r.question] = z;
    lm.answer_key[r.question] = r.answer;
    ids.push_back(r.id);
    suite.records.push_back(std::move(r));
  }
  validate(lm);
  suite.query_embeddings = std::make_shared<const EmbeddingStore>(
      config.embedding_model_id, ids, std::move(qv), false);
  suite.doc_embeddings = std::make_shared<const EmbeddingStore>(
      config.embedding_model_id, ids, std::move(dv), false);
  return suite;
}

}  // namespace dpobench
