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

#include "dpobench/benchmark.hpp"

#include <utility>

namespace dpobench {

std::unique_ptr<SyntheticTrial> make_synthetic_trial(const SyntheticSuiteConfig& suite,
                                                     SubsampleSize subsample,
                                                     std::size_t max_queries) {
  auto t = std::make_unique<SyntheticTrial>();
  t->suite = make_synthetic_suite(suite);
  t->index = std::make_unique<RecordIndex>(t->suite.records);
  t->split = make_split(t->suite.records, suite.seed, subsample);
  t->problem = make_acquisition_problem(t->split, t->suite.query_embeddings,
                                        t->suite.doc_embeddings, max_queries);
  t->lm = std::make_unique<SyntheticLm>(t->suite.lm);
  DpoCache cache;
  RelevanceBuildOptions opts;
  opts.dataset_id = suite.dataset_id;
  t->held_out = build_relevance_set(*t->lm, *t->index, t->split, cache, opts);
  t->validation = {t->split.sampled_test_queries, t->split.sampled_documents, &t->held_out};
  return t;
}

RankingQuality cosine_quality(const SyntheticTrial& trial) {
  const CosineRetriever cosine("cosine", trial.suite.query_embeddings, trial.suite.doc_embeddings);
  return evaluate_retriever(cosine, trial.held_out, trial.validation.queries,
                            trial.validation.documents);
}

PolicyOutcome run_policy(const SyntheticTrial& trial, const AcquisitionConfig& config,
                         std::size_t budget, bool track_rounds) {
  BudgetLedger ledger(budget);
  AcquisitionContext ctx;
  ctx.backend = trial.lm.get();
  ctx.records = trial.index.get();
  ctx.ledger = &ledger;
  ctx.dataset_id = trial.suite.config.dataset_id;
  ctx.validation = track_rounds ? &trial.validation : nullptr;
  PolicyOutcome out;
  out.run = run_acquisition(trial.problem, ctx, config);
  if (out.run.model.members.empty()) throw DataError("acquisition produced no trained model");
  const AdapterRetriever model("acquired", out.run.model, trial.suite.query_embeddings,
                               trial.suite.doc_embeddings);
  out.quality = evaluate_retriever(model, trial.held_out, trial.validation.queries,
                                   trial.validation.documents);
  return out;
}

AcquisitionConfig benchmark_acquisition_config() {
  AcquisitionConfig c;
  c.beta = 3.0;
  return c;
}

}  // namespace dpobench
