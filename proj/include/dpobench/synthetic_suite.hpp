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

// A self-contained benchmark world: MCQ records, frozen embeddings derived
// from hidden latents, and a synthetic LM whose demonstration utility is a
// function of the same latents. With sign = -1 the utility is anti-correlated
// with embedding cosine, so the frozen cosine retriever ranks badly and a
// trained adapter has something to learn.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dpobench/datasets.hpp"
#include "dpobench/retrievers.hpp"
#include "dpobench/synthetic_lm.hpp"

namespace dpobench {

struct SyntheticSuiteConfig {
  std::uint64_t seed = 0;
  // 88 records: 70 train, 18 test; with a 50-doc pool, 20 training queries.
  std::size_t n_records = 88;
  Eigen::Index latent_dim = 6;
  Eigen::Index embedding_dim = 16;
  double embedding_noise = 0.25;
  double sharpness = 4.0;
  double sign = -1.0;
  // Only strongly anti-aligned demonstrations help; most are harmful.
  double offset = -2.0;
  double gain = 2.0;
  std::string dataset_id = "synthetic-mcq";
  std::string embedding_model_id = "synthetic-embed";
  std::string llm_id = "synthetic-lm";
};

struct SyntheticSuite {
  SyntheticSuiteConfig config;
  std::vector<McqRecord> records;
  std::shared_ptr<const EmbeddingStore> query_embeddings;
  std::shared_ptr<const EmbeddingStore> doc_embeddings;
  SyntheticLmSpec lm;
};

SyntheticSuite make_synthetic_suite(const SyntheticSuiteConfig& config);

}  // namespace dpobench
