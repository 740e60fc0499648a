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

#include <cstddef>
#include <span>
#include <string>

#include "dpobench/dpo.hpp"
#include "dpobench/retrievers.hpp"

namespace dpobench {

struct RankingQuality {
  double ndcg10 = 0.0;
  double ndcg50 = 0.0;
  double simple_regret = 0.0;
  std::size_t n_queries = 0;
};

// Ranks `pool` for every query with `retriever` and averages nDCG@10,
// nDCG@50 and simple regret against `relevance`. A query id inside the pool
// is left out of its own ranking.
RankingQuality evaluate_retriever(const Retriever& retriever, const DpoRelevanceSet& relevance,
                                  std::span<const std::string> queries,
                                  std::span<const std::string> pool);

}  // namespace dpobench
