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

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dpobench/cli.hpp"
#include "dpobench/dpo.hpp"
#include "dpobench/metrics.hpp"
#include "dpobench/synthetic_lm.hpp"
#include "oracle_values.hpp"
#include "test_support.hpp"

namespace dpobench {
namespace {

namespace fs = std::filesystem;
using testing::slurp;
using testing::TempDir;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

const char* kSmall = R"([run]
out = out
seed = 11
trials = 3
budget = 60

[split]
n_queries = 4
n_docs = 10

[adapter]
epochs = 10

[acquisition]
ensemble_size = 2

[dataset.a]
kind = synthetic
n_records = 30

[dataset.b]
kind = synthetic
n_records = 30
seed = 5

[llm.lm]
kind = synthetic

[retriever.cos]
kind = cosine
)";

TEST(Cli, ScoresEveryTrialAndResumesFromCache) {
  TempDir dir("cli-score");
  const auto cfg = write(dir / "run.ini", kSmall);
  auto r = run({"score", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* d : {"a", "b"}) {
    for (int t = 0; t < 3; ++t) {
      const auto p = dir / ("out/relevance/" + std::string(d) + "__lm__t" + std::to_string(t) + ".jsonl");
      ASSERT_TRUE(fs::exists(p)) << p;
      std::ifstream in(p);
      EXPECT_EQ(read_relevance_jsonl(in).entries.size(), 40u);
    }
  }
  EXPECT_NE(r.out.find("40 pairs, 40 new"), std::string::npos);
  r = run({"score", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0);
  std::istringstream lines(r.out);
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    EXPECT_NE(line.find(", 0 new"), std::string::npos) << line;
  }
  EXPECT_EQ(n, 6);
  EXPECT_TRUE(fs::exists(dir / "out/score.config.ini"));
}

TEST(Cli, FileDatasetWithSpecMatchesTable) {
  TempDir dir("cli-table");
  const auto records = testing::table_records();
  {
    std::ofstream o(dir / "table.jsonl");
    write_dataset_jsonl(o, records);
  }
  write(dir / "spec.json", to_json(testing::table_spec()).dump());
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  EmbeddingMatrix m = EmbeddingMatrix::Identity(5, 5);
  save_embeddings(dir / "emb.jsonl", EmbeddingStore("e", ids, m), EmbeddingFormat::kJsonlVectors);
  const auto cfg = write(dir / "run.ini", R"([run]
out = out
trials = 2

[split]
n_queries = 1
n_docs = 4

[dataset.table]
kind = file
path = table.jsonl
embeddings = emb.jsonl

[llm.oracle]
spec = spec.json
)");
  const auto r = run({"score", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int t = 0; t < 2; ++t) {
    std::ifstream in(dir / ("out/relevance/table__oracle__t" + std::to_string(t) + ".jsonl"));
    const auto set = read_relevance_jsonl(in);
    ASSERT_EQ(set.entries.size(), 4u);
    for (const auto& [pair, score] : set.entries) {
      const int q = pair.first[1] - '0';
      const int d = pair.second[1] - '0';
      EXPECT_NEAR(score.value, oracle::kDpoTable[q][d], 1e-9) << pair.first << " " << pair.second;
    }
  }
}

TEST(Cli, TrainedAdapterBeatsCosine) {
  TempDir dir("cli-train");
  const auto cfg = write(dir / "run.ini", R"([run]
out = out
seed = 3
trials = 1
budget = 150

[dataset.syn]
kind = synthetic

[llm.lm]
kind = synthetic

[retriever.cos]
kind = cosine
organization = base

[retriever.rl]
kind = adapter
organization = ours
)");
  auto r = run({"evaluate", "--config", cfg.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("relevance/syn__lm__t0.jsonl"), std::string::npos) << r.err;
  ASSERT_EQ(run({"score", "--config", cfg.string()}).code, 0);
  r = run({"train", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoints/syn__lm__t0.json", "history/syn__lm__t0.jsonl",
                        "history/syn__lm__t0.loss.csv", "history/syn__lm__t0.curve.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  r = run({"evaluate", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "out/cells.csv");
  const auto cells = read_cells_csv(in);
  ASSERT_EQ(cells.size(), 2u);
  const auto& cos = cells[0].model_id == "cos" ? cells[0] : cells[1];
  const auto& rl = cells[0].model_id == "rl" ? cells[0] : cells[1];
  EXPECT_GT(rl.ndcg10, cos.ndcg10 + 0.05);
  const std::string md = slurp(dir / "out/leaderboard.md");
  EXPECT_LT(md.find("`rl`"), md.find("`cos`"));

  // Re-aggregating the saved cells reproduces the leaderboard.
  const std::string before = slurp(dir / "out/leaderboard.csv");
  fs::remove(dir / "out/leaderboard.csv");
  ASSERT_EQ(run({"leaderboard", "--config", cfg.string()}).code, 0);
  EXPECT_EQ(slurp(dir / "out/leaderboard.csv"), before);
}

TEST(Cli, ListsEveryConfigErrorAtOnce) {
  TempDir dir("cli-badcfg");
  const auto cfg = write(dir / "run.ini", R"([run]
trials = 0
colour = red

[acquisition]
epsilon = 2

[dataset.x]
kind = file
path = nowhere.jsonl

[llm.z]
kind = telepathy
)");
  const auto r = run({"score", "--config", cfg.string()});
  EXPECT_EQ(r.code, 1);
  for (const char* needle : {"colour", "trials", "epsilon", "nowhere.jsonl", "telepathy",
                             "output directory"}) {
    EXPECT_NE(r.err.find(needle), std::string::npos) << needle << "\n" << r.err;
  }
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli-exit");
  const auto cfg = write(dir / "run.ini", kSmall);
  EXPECT_EQ(run({"score"}).code, 1);
  EXPECT_EQ(run({"nonsense", "--config", cfg.string()}).code, 1);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--policy", "greedy"}).code, 1);
  EXPECT_EQ(run({"score", "--config", cfg.string(), "--backend", "nope"}).code, 1);

  auto r = run({"score", "--config", cfg.string(), "--budget", "7"});
  EXPECT_EQ(r.code, 3) << r.err;
  // The seven scored pairs survive in the cache.
  std::ifstream cache(dir / "out/cache/a__lm.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(cache, l);) lines += !l.empty();
  EXPECT_EQ(lines, 7u);

  const auto dead = write(dir / "dead.ini", R"([run]
out = out2
trials = 1
max_retries = 1
backoff_ms = 1

[split]
n_queries = 1
n_docs = 3

[dataset.a]
n_records = 10

[llm.remote]
kind = http
url = http://127.0.0.1:1
model = m
timeout_ms = 200
)");
  r = run({"score", "--config", dead.string()});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, CompareWritesOneRowPerPolicyAndSeed) {
  TempDir dir("cli-compare");
  const auto cfg = write(dir / "run.ini", std::string(kSmall) + R"(
[compare]
budgets = 0.5, 30
seeds = 2
)");
  const auto r = run({"compare-acquisition", "--config", cfg.string(), "--backend", "lm"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "out/compare/budget_curve.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("dataset,llm,trial,budget,policy,seed,", 0), 0u);
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) {
    ++rows;
    std::vector<std::string> f;
    std::stringstream ss(l);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 12u);
    EXPECT_LE(std::stoul(f[6]), std::stoul(f[3]));  // consumed <= budget
    EXPECT_EQ(f[6], f[7]);                           // each charge is one observation
  }
  // 2 datasets x 3 trials x 2 budgets x 2 seeds x 2 policies.
  EXPECT_EQ(rows, 48u);
  EXPECT_TRUE(fs::exists(dir / "out/compare/summary.md"));

  EXPECT_EQ(run({"compare-acquisition", "--config", cfg.string(), "--budget", "3"}).code, 1);
}

TEST(Cli, LockRejectsConcurrentWriter) {
  TempDir dir("cli-lock");
  const auto cfg = write(dir / "run.ini", kSmall);
  fs::create_directories(dir / "out");
  const int fd = ::open((dir / "out/.lock").c_str(), O_RDWR | O_CREAT, 0644);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
  const auto r = run({"score", "--config", cfg.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("lock"), std::string::npos) << r.err;
  ::close(fd);
  EXPECT_EQ(run({"score", "--config", cfg.string()}).code, 0);
}

TEST(Cli, ResolvedConfigParsesBackToTheSameRun) {
  TempDir dir("cli-resolved");
  const auto cfg = write(dir / "run.ini", kSmall);
  ASSERT_EQ(run({"score", "--config", cfg.string(), "--seed", "99"}).code, 0);
  const auto resolved = dir / "out/score.config.ini";
  cli::Overrides ov;
  ov.out = (dir / "out").string();
  const auto a = cli::load_run_config(resolved, ov);
  EXPECT_EQ(a.seed, 99u);
  EXPECT_EQ(a.datasets.size(), 2u);
  cli::Overrides seeded;
  seeded.seed = 99;
  const auto b = cli::load_run_config(cfg, seeded);
  EXPECT_EQ(a.dataset_seed(a.datasets[0]), b.dataset_seed(b.datasets[0]));
  std::ostringstream again;
  cli::write_resolved_config(again, a);
  const std::string text = slurp(resolved);
  ASSERT_EQ(text.rfind("; resolved configuration of `score`\n", 0), 0u);
  EXPECT_EQ(again.str(), text.substr(text.find('\n') + 1));
}

TEST(Cli, ShippedSampleConfigIsValid) {
  const auto c = cli::load_run_config(testing::data_path("../configs/synthetic.ini"), {});
  EXPECT_EQ(c.trials, 3u);
  EXPECT_EQ(c.retrievers.size(), 2u);
  EXPECT_EQ(c.acquisition.beta, 3.0);
}

}  // namespace
}  // namespace dpobench
