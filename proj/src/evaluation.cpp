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

#include "dpobench/evaluation.hpp"

#include <vector>

namespace dpobench {

RankingQuality evaluate_retriever(const Retriever& retriever, const DpoRelevanceSet& relevance,
                                  std::span<const std::string> queries,
                                  std::span<const std::string> pool) {
  if (queries.empty()) throw DataError("evaluation needs at least one query");
  RankingQuality q;
  std::vector<std::string> docs;
  for (const auto& query : queries) {
    docs.clear();
    for (const auto& d : pool) {
      if (d != query) docs.push_back(d);
    }
    const RelevanceMap rel = relevance.relevance_for(query);
    const RetrieverRanking ranking = rank_documents(retriever, query, docs);
    q.ndcg10 += ndcg_at_k(ranking, rel, 10);
    q.ndcg50 += ndcg_at_k(ranking, rel, 50);
    q.simple_regret += simple_regret(ranking, rel);
    ++q.n_queries;
  }
  const double n = static_cast<double>(q.n_queries);
  q.ndcg10 /= n;
  q.ndcg50 /= n;
  q.simple_regret /= n;
  return q;
}

}  // namespace dpobench
