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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dpobench/budget.hpp"
#include "dpobench/datasets.hpp"
#include "dpobench/llm_gateway.hpp"

namespace dpobench {

// Numerically stable log(1 / (1 + exp(-x))).
inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

// Which incorrect answer plays the dispreferred response.
enum class RbarPolicy {
  kFirst,      // the first listed incorrect answer
  kMeanLogit,  // average the dispreferred log-ratio over all incorrect answers
};

RbarPolicy parse_rbar_policy(std::string_view name);
std::string_view to_string(RbarPolicy policy);

struct DpoComponents {
  double logp_r_base = 0.0;
  double logp_r_ctx = 0.0;
  double logp_rbar_base = 0.0;
  double logp_rbar_ctx = 0.0;

  double inner_logit() const {
    return (logp_r_ctx - logp_r_base) - (logp_rbar_ctx - logp_rbar_base);
  }
};

// log sigmoid of the inner logit, kept strictly negative.
double dpo_value(const DpoComponents& c);

struct DpoScore {
  std::string query_id;
  std::string doc_id;
  std::string llm_id;
  double value = 0.0;
  DpoComponents components;

  bool operator==(const DpoScore& o) const {
    return query_id == o.query_id && doc_id == o.doc_id && llm_id == o.llm_id &&
           value == o.value && components.logp_r_base == o.components.logp_r_base &&
           components.logp_r_ctx == o.components.logp_r_ctx &&
           components.logp_rbar_base == o.components.logp_rbar_base &&
           components.logp_rbar_ctx == o.components.logp_rbar_ctx;
  }
};

// Four echo-scoring calls: correct and incorrect response, each with and
// without `doc` as the demonstration. Throws DataError when a component is
// not finite or the query has no incorrect answer.
DpoScore compute_dpo(const LogprobBackend& backend, const McqRecord& query, const McqRecord& doc,
                     RbarPolicy policy, const RetryPolicy& retry = {});

struct DpoCacheKey {
  std::string llm_id;
  std::string template_version;
  std::string query_id;
  std::string doc_id;
  RbarPolicy policy = RbarPolicy::kFirst;

  bool operator==(const DpoCacheKey&) const = default;
};

struct DpoCacheKeyHash {
  std::size_t operator()(const DpoCacheKey& k) const;
};

// Append-only JSONL store of computed DPO scores. Opening an existing file
// replays it; later lines win on duplicate keys. Thread-safe.
class DpoCache {
 public:
  // In-memory only.
  DpoCache() = default;
  explicit DpoCache(const std::filesystem::path& path);

  std::optional<DpoScore> find(const DpoCacheKey& key) const;
  void put(const DpoCacheKey& key, const DpoScore& score);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<DpoCacheKey, DpoScore, DpoCacheKeyHash> entries_;
  std::optional<std::ofstream> file_;
};

// Ground truth for one (dataset, llm, trial): sparse (query, doc) -> DPO.
struct DpoRelevanceSet {
  std::string dataset_id;
  std::string llm_id;
  std::uint64_t trial_seed = 0;
  RbarPolicy policy = RbarPolicy::kFirst;
  std::map<QueryDocPair, DpoScore> entries;

  std::vector<std::string> query_ids() const;
  // doc_id -> DPO for one query.
  std::unordered_map<std::string, double> relevance_for(const std::string& query_id) const;

  bool operator==(const DpoRelevanceSet&) const = default;
};

struct RelevanceBuildOptions {
  std::string dataset_id;
  RbarPolicy policy = RbarPolicy::kFirst;
  RetryPolicy retry;
  // Null means unlimited.
  BudgetLedger* ledger = nullptr;
  // By default only cache misses are charged. The acquisition loop charges
  // hits too, so a warm cache never buys extra observations.
  bool charge_cache_hits = false;
  unsigned workers = 1;
};

// Thrown when scoring stops early. Everything completed before the failure
// is already in the cache; `completed` says how many pairs that was.
class RelevanceBuildError : public Error {
 public:
  RelevanceBuildError(const std::string& what, std::size_t completed, int exit_code)
      : Error(what), completed_(completed), exit_code_(exit_code) {}
  std::size_t completed() const { return completed_; }
  // 2 for backend failures, 3 for budget exhaustion.
  int exit_code() const { return exit_code_; }

 private:
  std::size_t completed_;
  int exit_code_;
};

// Scores every (sampled query, sampled document) pair of the split,
// consulting the cache first.
DpoRelevanceSet build_relevance_set(const LogprobBackend& backend, const RecordIndex& records,
                                    const SplitPlan& split, DpoCache& cache,
                                    const RelevanceBuildOptions& options);

// Scores an arbitrary list of pairs the same way (used for validation grids).
DpoRelevanceSet build_relevance_set(const LogprobBackend& backend, const RecordIndex& records,
                                    const std::vector<QueryDocPair>& pairs, DpoCache& cache,
                                    const RelevanceBuildOptions& options,
                                    std::uint64_t trial_seed = 0);

void write_relevance_jsonl(std::ostream& out, const DpoRelevanceSet& set);
DpoRelevanceSet read_relevance_jsonl(std::istream& in);
// Queries as rows, documents as columns, DPO values in the cells.
void write_relevance_csv_matrix(std::ostream& out, const DpoRelevanceSet& set);

}  // namespace dpobench
