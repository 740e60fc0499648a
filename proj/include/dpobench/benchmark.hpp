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

// One synthetic trial end to end: world, split, fully scored held-out grid,
// and the two acquisition policies run against it.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>

#include "dpobench/acquisition.hpp"
#include "dpobench/evaluation.hpp"
#include "dpobench/synthetic_lm.hpp"
#include "dpobench/synthetic_suite.hpp"

namespace dpobench {

// Holds references into itself, so it lives behind a unique_ptr.
struct SyntheticTrial {
  SyntheticSuite suite;
  std::unique_ptr<RecordIndex> index;
  SplitPlan split;
  AcquisitionProblem problem;
  std::unique_ptr<SyntheticLm> lm;
  DpoRelevanceSet held_out;  // sampled test queries x sampled documents
  ValidationSet validation;

  SyntheticTrial() = default;
  SyntheticTrial(const SyntheticTrial&) = delete;
  SyntheticTrial& operator=(const SyntheticTrial&) = delete;

  std::size_t grid_size() const { return problem.queries.size() * problem.documents.size(); }
};

// The split uses the suite seed as its trial seed.
std::unique_ptr<SyntheticTrial> make_synthetic_trial(const SyntheticSuiteConfig& suite,
                                                     SubsampleSize subsample = {18, 50},
                                                     std::size_t max_queries = 0);

RankingQuality cosine_quality(const SyntheticTrial& trial);

struct PolicyOutcome {
  AcquisitionResult run;
  RankingQuality quality;  // of the final model on the held-out grid
};

// Runs config.policy with a fresh ledger of `budget` pairs. With
// `track_rounds` every round is also scored on the held-out grid.
PolicyOutcome run_policy(const SyntheticTrial& trial, const AcquisitionConfig& config,
                         std::size_t budget, bool track_rounds = false);

// Settings used for the synthetic acquisition comparison: library defaults
// except a wider exploration bonus.
AcquisitionConfig benchmark_acquisition_config();

}  // namespace dpobench
