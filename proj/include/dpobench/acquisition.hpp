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

// Budgeted acquisition of DPO rewards. Each round picks (query, doc) pairs,
// scores them through the DPO module, and retrains an ensemble of adapters
// from scratch on everything seen so far. Candidates are ranked by the
// upper-confidence score mu + beta * u, queries are visited in an order
// sampled by their largest uncertainty, and inside a query the greedy pick
// is penalized by lambda times its closest cosine to docs already taken.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dpobench/adapter.hpp"
#include "dpobench/budget.hpp"
#include "dpobench/datasets.hpp"
#include "dpobench/dpo.hpp"
#include "dpobench/retrievers.hpp"

namespace dpobench {

enum class AcquisitionPolicy { kRlraif, kRandom };
AcquisitionPolicy parse_acquisition_policy(std::string_view name);
std::string_view to_string(AcquisitionPolicy p);

struct AcquisitionConfig {
  double beta = 1.0;
  double lambda = 0.5;
  double epsilon = 0.2;
  // 0 means min(512, budget / 5), raised to docs_per_query.
  std::size_t round_size = 0;
  // Docs a query receives when it is selected in a round (m).
  std::size_t docs_per_query = 5;
  std::size_t ensemble_size = 5;
  AcquisitionPolicy policy = AcquisitionPolicy::kRlraif;
  double query_weight_floor = 1e-3;
  // Subtract each member's per-query mean score before mixing members.
  bool center_per_query = true;
  std::uint64_t seed = 0;
  std::size_t max_rounds = 10000;
  // Parallel DPO requests and parallel member training.
  unsigned workers = 1;
  TrainConfig train;
};

// Throws ConfigError on beta/lambda < 0, epsilon outside [0, 1], round_size
// of 1, docs_per_query < 2 or ensemble_size < 1.
void validate(const AcquisitionConfig& config);
// round_size with the budget-dependent default applied.
std::size_t resolved_round_size(const AcquisitionConfig& config, std::size_t budget);

// The training side of one trial: queries to acquire rewards for, the
// shared document pool and the frozen embeddings.
struct AcquisitionProblem {
  std::vector<std::string> queries;
  std::vector<std::string> documents;
  std::shared_ptr<const EmbeddingStore> query_embeddings;
  std::shared_ptr<const EmbeddingStore> doc_embeddings;

  // All (q, d) with q != d, query-major.
  std::vector<QueryDocPair> grid() const;
};

// Training queries are the split's train ids outside the sampled document
// pool, in split order, truncated to `max_queries` (0 keeps all).
AcquisitionProblem make_acquisition_problem(const SplitPlan& split,
                                            std::shared_ptr<const EmbeddingStore> query_embeddings,
                                            std::shared_ptr<const EmbeddingStore> doc_embeddings,
                                            std::size_t max_queries = 0);

// Per sampled query: the ceil((1 - eps) m) nearest docs by cosine, then the
// rest of m drawn uniformly from the remaining docs. As many queries as fit
// in min(round_size, remaining budget), chosen by a seeded shuffle. Throws
// BudgetExhausted when not even one query fits.
std::vector<QueryDocPair> seed_round(const AcquisitionProblem& problem,
                                     const AcquisitionConfig& config, const BudgetLedger& ledger);

struct EnsembleState {
  std::vector<Adapter> members;
};

// member_scores: one row per member, one column per candidate. Returns
// mean + beta * sample standard deviation per column (0 spread when E = 1).
Eigen::VectorXd acquisition_scores(const Eigen::MatrixXd& member_scores, double beta);

struct ScoredCandidate {
  QueryDocPair pair;
  double mean = 0.0;
  double uncertainty = 0.0;
  double score = 0.0;
};

// Scores every grid pair not in `evaluated`. With no members the prior is the
// frozen cosine similarity with zero uncertainty.
std::vector<ScoredCandidate> acquisition_scores(const EnsembleState& ensemble,
                                                const AcquisitionProblem& problem,
                                                const std::set<QueryDocPair>& evaluated,
                                                const AcquisitionConfig& config);

// Greedy diversity-penalized selection of up to `batch_size` pairs.
// `observed_docs` counts docs already observed per query; a query without
// any receives at least two docs or none. Throws DataError when there are no
// candidates at all.
std::vector<QueryDocPair> select_batch(std::span<const ScoredCandidate> candidates,
                                       const EmbeddingStore& doc_embeddings,
                                       const AcquisitionConfig& config,
                                       const std::map<std::string, std::size_t>& observed_docs,
                                       std::size_t batch_size, std::uint64_t round_seed);

// Uniform-random pairs from the grid outside `evaluated`, keeping the same
// pairing rule for queries without observations.
std::vector<QueryDocPair> random_round(const AcquisitionProblem& problem,
                                       const std::set<QueryDocPair>& evaluated,
                                       const std::map<std::string, std::size_t>& observed_docs,
                                       std::size_t batch_size, std::uint64_t round_seed);

// Held-out queries with a full relevance set over the document pool.
struct ValidationSet {
  std::vector<std::string> queries;
  std::vector<std::string> documents;
  const DpoRelevanceSet* relevance = nullptr;
};

struct RoundRecord {
  std::size_t round = 0;
  std::size_t requested = 0;
  std::size_t completed = 0;
  std::size_t consumed = 0;
  std::size_t observations = 0;
  std::size_t triples = 0;
  // Final epoch loss of each member.
  std::vector<double> member_losses;
  // Queries with exactly one observed doc after the round.
  std::vector<std::string> unpaired_queries;
  std::optional<double> ndcg10;
  std::optional<double> ndcg50;
  std::optional<double> simple_regret;
};

struct AcquisitionResult {
  AcquisitionPolicy policy = AcquisitionPolicy::kRlraif;
  AdapterCheckpoint model;  // the last trained ensemble
  std::vector<RewardObservation> observations;  // sorted by (query, doc)
  std::vector<RoundRecord> history;
  std::vector<std::vector<double>> loss_traces;  // of the last training
  // Empty on a clean finish; otherwise why the loop ended early.
  std::string stop_reason;
  // 0, or 2 / 3 when a backend failure / budget exhaustion ended the run.
  int exit_code = 0;
};

struct AcquisitionContext {
  const LogprobBackend* backend = nullptr;
  const RecordIndex* records = nullptr;
  DpoCache* cache = nullptr;
  BudgetLedger* ledger = nullptr;
  std::string dataset_id;
  RbarPolicy rbar_policy = RbarPolicy::kFirst;
  RetryPolicy retry;
  const ValidationSet* validation = nullptr;
};

// Runs config.policy until the budget or the grid is exhausted.
AcquisitionResult run_acquisition(const AcquisitionProblem& problem, const AcquisitionContext& ctx,
                                  const AcquisitionConfig& config);
AcquisitionResult run_rlraif(const AcquisitionProblem& problem, const AcquisitionContext& ctx,
                             AcquisitionConfig config);
AcquisitionResult run_random_baseline(const AcquisitionProblem& problem,
                                      const AcquisitionContext& ctx, AcquisitionConfig config);

// Trains config.ensemble_size adapters on the same observations with seeds
// derived from config.seed.
EnsembleState train_ensemble(std::span<const RewardObservation> observations,
                             const AcquisitionProblem& problem, const AcquisitionConfig& config,
                             std::vector<std::vector<double>>* loss_traces = nullptr,
                             std::size_t* n_triples = nullptr);

void write_history_jsonl(std::ostream& out, const AcquisitionResult& result);
// One row per round: policy, seed, round, consumed, ndcg10, ndcg50, simple_regret.
void write_budget_curve_header(std::ostream& out);
void write_budget_curve_rows(std::ostream& out, const AcquisitionResult& result,
                             std::uint64_t seed);

}  // namespace dpobench
