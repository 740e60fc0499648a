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

// Ranking quality against DPO ground truth. DPO values are negative, so the
// gain of a document is 2^DPO (in (0, 1)) rather than the classical
// 2^rel - 1, and the discount is 1 / log2(rank + 1).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace dpobench {

// doc_id -> DPO for one query.
using RelevanceMap = std::unordered_map<std::string, double>;

struct RetrieverRanking {
  std::string query_id;
  std::vector<std::string> ranked_doc_ids;  // best first
};

// DCG over DPO values listed in rank order, truncated at k.
template <typename Derived>
typename Derived::Scalar dcg_of_ranked(const Eigen::MatrixBase<Derived>& dpo_in_rank_order,
                                       std::size_t k) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = std::min<Eigen::Index>(dpo_in_rank_order.size(),
                                                static_cast<Eigen::Index>(k));
  Scalar dcg(0);
  for (Eigen::Index j = 0; j < n; ++j) {
    dcg += std::exp2(dpo_in_rank_order(j)) / std::log2(Scalar(j + 2));
  }
  return dcg;
}

double dcg_at_k(const RetrieverRanking& ranking, const RelevanceMap& relevance, std::size_t k);
// DCG of the ranking's own pool sorted by descending DPO (ties: ascending doc_id).
double idcg_at_k(const RetrieverRanking& ranking, const RelevanceMap& relevance, std::size_t k);
double ndcg_at_k(const RetrieverRanking& ranking, const RelevanceMap& relevance, std::size_t k);

// max_d DPO(q, d) - DPO(q, top-ranked d) over the ranking's pool.
double simple_regret(const RetrieverRanking& ranking, const RelevanceMap& relevance);

// One (model, dataset, llm, trial) evaluation, averaged over the set's queries.
struct EvalCell {
  std::string model_id;
  std::string organization;
  std::string dataset_id;
  std::string llm_id;
  std::uint64_t trial_seed = 0;
  double ndcg10 = 0.0;
  double ndcg50 = 0.0;
  double simple_regret = 0.0;
  std::size_t n_queries = 0;
};

struct CellKey {
  std::string dataset_id;
  std::string llm_id;
  std::uint64_t trial_seed = 0;
  auto operator<=>(const CellKey&) const = default;
};

struct MetricMeans {
  double ndcg10 = 0.0;
  double ndcg50 = 0.0;
  std::size_t cells = 0;
};

struct ModelSummary {
  std::string model_id;
  std::string organization;
  MetricMeans overall;
  std::map<std::string, MetricMeans> per_dataset;
  std::map<std::string, MetricMeans> per_llm;
  // Cells some other model has but this one lacks. Never imputed.
  std::vector<CellKey> missing_cells;
};

struct EvalReport {
  // Sorted by descending nDCG@10, then nDCG@50, then model id.
  std::vector<ModelSummary> models;
  std::vector<EvalCell> cells;
};

// Unweighted means over each model's cells. Throws DataError on no cells.
EvalReport aggregate(std::span<const EvalCell> cells);

void write_cells_csv(std::ostream& out, std::span<const EvalCell> cells);
std::vector<EvalCell> read_cells_csv(std::istream& in);
// Organization, Model, nDCG@10, nDCG@50 (+ cells and missing count).
void write_leaderboard_csv(std::ostream& out, const EvalReport& report);
void write_leaderboard_markdown(std::ostream& out, const EvalReport& report);
// One table per dataset and per llm, models as rows.
void write_breakdown_markdown(std::ostream& out, const EvalReport& report);

}  // namespace dpobench
