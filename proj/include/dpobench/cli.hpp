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

// Run configuration and the command-line front end. Configs are INI files
// with [run], [split], [acquisition], [adapter], [compare], [leaderboard]
// and named [dataset.X], [llm.X], [retriever.X] sections. Every random
// choice is derived from the root seed by label.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpobench/acquisition.hpp"
#include "dpobench/http_clients.hpp"
#include "dpobench/synthetic_suite.hpp"

namespace dpobench::cli {

enum class DatasetKind { kSynthetic, kFile };
enum class LlmKind { kSynthetic, kHttp };

struct DatasetEntry {
  std::string name;
  DatasetKind kind = DatasetKind::kSynthetic;
  // kSynthetic. suite.seed is derived from the root seed unless set.
  SyntheticSuiteConfig suite;
  bool explicit_seed = false;
  // kFile. One embeddings file serves both sides unless both are given.
  std::filesystem::path path;
  std::filesystem::path embeddings;
  std::filesystem::path query_embeddings;
  std::filesystem::path doc_embeddings;
};

struct LlmEntry {
  std::string name;
  LlmKind kind = LlmKind::kSynthetic;
  // kSynthetic: a spec JSON, or empty to use a synthetic dataset's own LM.
  std::filesystem::path spec;
  // kHttp. The key is read from the environment variable, never stored.
  HttpEndpointConfig http;
  std::string api_key_env;
};

enum class RetrieverKindEntry { kCosine, kAdapter, kExternal };

struct RetrieverEntry {
  std::string name;
  RetrieverKindEntry kind = RetrieverKindEntry::kCosine;
  std::string organization = "-";
  // kAdapter: path under the output directory; {dataset}, {llm} and
  // {trial} are substituted.
  std::string checkpoint = "checkpoints/{dataset}__{llm}__t{trial}.json";
  HttpEndpointConfig http;  // kExternal
  std::string api_key_env;
};

struct CompareSettings {
  // Values <= 1 are fractions of the training grid, larger ones pair counts.
  std::vector<double> budgets{0.15, 1.0};
  std::size_t seeds = 10;
  bool track_rounds = true;
};

struct RunConfig {
  std::filesystem::path source;  // the config file, for relative paths
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t trials = 3;
  unsigned workers = 1;
  std::optional<std::size_t> budget;
  // Set by --budget; score is capped only then.
  bool budget_on_cli = false;
  AcquisitionPolicy policy = AcquisitionPolicy::kRlraif;
  RbarPolicy rbar_policy = RbarPolicy::kFirst;
  RetryPolicy retry;
  SubsampleSize subsample{18, 50};
  std::size_t max_train_queries = 0;
  AcquisitionConfig acquisition;
  CompareSettings compare;
  std::vector<std::filesystem::path> leaderboard_inputs;
  std::vector<DatasetEntry> datasets;
  std::vector<LlmEntry> llms;
  std::vector<RetrieverEntry> retrievers;

  std::uint64_t trial_seed(std::size_t trial) const;
  // The dataset's synthetic world seed (explicit or derived).
  std::uint64_t dataset_seed(const DatasetEntry& d) const;
};

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  std::optional<AcquisitionPolicy> policy;
  // Restricts the run to these llm sections.
  std::vector<std::string> backends;
};

// Throws ConfigError listing every problem found, one per line.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& source,
                           const Overrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});

// Every effective setting, defaults included, in a form parse_run_config
// reads back. Credentials are never written.
void write_resolved_config(std::ostream& out, const RunConfig& config);

// Full command line (without argv[0]). Returns the process exit code:
// 0 ok, 1 validation, 2 backend failure, 3 budget exhausted.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpobench::cli
