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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dpobench/budget.hpp"
#include "dpobench/dpo.hpp"
#include "dpobench/errors.hpp"
#include "dpobench/synthetic_lm.hpp"
#include "test_support.hpp"

namespace dpobench {
namespace {

using testing::ScriptedBackend;
using testing::TempDir;

SyntheticLmSpec constant_spec(double u, double gc, double gi) {
  SyntheticLmSpec s;
  s.seed = 17;
  s.correct_gain = gc;
  s.incorrect_gain = gi;
  s.utility.kind = UtilityKind::kConstant;
  s.utility.constant = u;
  return s;
}

std::vector<McqRecord> keyed(SyntheticLmSpec& spec, std::vector<McqRecord> recs) {
  for (const auto& r : recs) spec.answer_key[r.question] = r.answer;
  return recs;
}

TEST(DpoValue, IdentityAndAntisymmetry) {
  EXPECT_NEAR(dpo_value({-3, -3, -4, -4}), std::log(0.5), 1e-15);
  EXPECT_NEAR(dpo_value({-3, -2, -4, -4}), oracle::kLogSigmoidOne, 1e-15);
  for (double x : {-30.0, -1.0, 0.0, 0.5, 7.0, 40.0}) {
    const double a = dpo_value({0, x, 0, 0});
    const double b = dpo_value({0, -x, 0, 0});
    EXPECT_NEAR(std::exp(a) + std::exp(b), 1.0, 1e-12);
    EXPECT_LT(a, 0.0);
  }
  EXPECT_LT(dpo_value({0, 800, 0, 0}), 0.0);
  EXPECT_THROW(dpo_value({0, INFINITY, 0, 0}), DataError);
}

TEST(ComputeDpo, ZeroGainGivesLogHalf) {
  auto spec = constant_spec(0.7, 0.0, 0.0);
  const auto recs = keyed(spec, testing::numbered_records(3));
  SyntheticLm lm(spec);
  const auto s = compute_dpo(lm, recs[0], recs[1], RbarPolicy::kFirst);
  EXPECT_NEAR(s.value, -0.6931, 1e-4);
  EXPECT_NEAR(s.components.inner_logit(), 0.0, 1e-12);
  EXPECT_EQ(s.query_id, recs[0].id);
  EXPECT_EQ(s.doc_id, recs[1].id);
  EXPECT_EQ(s.llm_id, "synthetic-lm");
}

TEST(ComputeDpo, ContextImprovesCorrectByOneNat) {
  auto spec = constant_spec(1.0, 1.0, 0.0);
  const auto recs = keyed(spec, testing::numbered_records(2));
  SyntheticLm lm(spec);
  const auto s = compute_dpo(lm, recs[0], recs[1], RbarPolicy::kFirst);
  EXPECT_NEAR(s.components.logp_r_ctx - s.components.logp_r_base, 1.0, 1e-12);
  EXPECT_NEAR(s.components.logp_rbar_ctx - s.components.logp_rbar_base, 0.0, 1e-12);
  EXPECT_NEAR(s.value, oracle::kLogSigmoidOne, 1e-12);
  EXPECT_NEAR(s.value, -0.3133, 1e-4);
}

TEST(ComputeDpo, TableGridMatchesOracle) {
  const auto recs = testing::table_records();
  SyntheticLm lm(testing::table_spec());
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const auto s = compute_dpo(lm, recs[static_cast<std::size_t>(i)],
                                 recs[static_cast<std::size_t>(j)], RbarPolicy::kFirst);
      EXPECT_NEAR(s.value, oracle::kDpoTable[i][j], 1e-9) << i << "," << j;
      EXPECT_NEAR(s.value, dpo_value(s.components), 1e-12);
    }
  }
}

TEST(ComputeDpo, MeanLogitAveragesIncorrectAnswers) {
  auto spec = constant_spec(0.5, 1.0, 1.0);
  auto recs = testing::numbered_records(2);
  recs[0].incorrect_answers = {"wrong a", "wrong b", "wrong c"};
  keyed(spec, recs);
  SyntheticLm lm(spec);
  const auto first = compute_dpo(lm, recs[0], recs[1], RbarPolicy::kFirst);
  const auto mean = compute_dpo(lm, recs[0], recs[1], RbarPolicy::kMeanLogit);
  // Every incorrect answer gets the same shift, so the averaged log-ratio
  // equals the single one.
  EXPECT_NEAR(first.value, mean.value, 1e-12);
  EXPECT_NEAR(first.value, log_sigmoid(1.0), 1e-12);
  EXPECT_EQ(parse_rbar_policy("mean-logit"), RbarPolicy::kMeanLogit);
  EXPECT_EQ(to_string(RbarPolicy::kFirst), "first");
  EXPECT_THROW(parse_rbar_policy("median"), ConfigError);
}

TEST(ComputeDpo, ZeroProbabilityComponentIsDataError) {
  ScriptedBackend b("zero", [](const std::string& p) {
    return testing::char_tokens(p, -INFINITY);
  });
  const auto recs = testing::numbered_records(2);
  EXPECT_THROW(compute_dpo(b, recs[0], recs[1], RbarPolicy::kFirst), DataError);
}

TEST(BudgetLedger, ReserveCommitRelease) {
  BudgetLedger l(2);
  EXPECT_TRUE(l.reserve({"q", "a"}));
  EXPECT_FALSE(l.reserve({"q", "a"}));
  EXPECT_TRUE(l.reserve({"q", "b"}));
  EXPECT_THROW(l.reserve({"q", "c"}), BudgetExhausted);
  l.release({"q", "b"});
  l.commit({"q", "a"});
  EXPECT_EQ(l.consumed(), 1u);
  EXPECT_EQ(l.remaining(), 1u);
  EXPECT_FALSE(l.reserve({"q", "a"}));
  EXPECT_TRUE(l.charged({"q", "a"}));
  EXPECT_THROW(l.commit({"q", "z"}), Error);
  l.log_round(0, 3, 1);
  ASSERT_EQ(l.rounds().size(), 1u);
  EXPECT_EQ(l.rounds()[0].completed, 1u);
}

class RelevanceSetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = testing::table_spec();
    records_ = testing::table_records();
    for (auto& r : testing::numbered_records(3, "x")) {
      spec_.answer_key[r.question] = r.answer;
      records_.push_back(r);
    }
    index_ = std::make_unique<RecordIndex>(records_);
    lm_ = std::make_unique<SyntheticLm>(spec_);
  }
  SyntheticLmSpec spec_;
  std::vector<McqRecord> records_;
  std::unique_ptr<RecordIndex> index_;
  std::unique_ptr<SyntheticLm> lm_;
};

TEST_F(RelevanceSetTest, TwoByThreeGivesSixEntries) {
  SplitPlan split;
  split.trial_seed = 4;
  split.sampled_test_queries = {"t0", "t1"};
  split.sampled_documents = {"t2", "t3", "t4"};
  DpoCache cache;
  RelevanceBuildOptions opt;
  opt.dataset_id = "table";
  const auto set = build_relevance_set(*lm_, *index_, split, cache, opt);
  EXPECT_EQ(set.entries.size(), 6u);
  EXPECT_EQ(set.trial_seed, 4u);
  EXPECT_EQ(set.query_ids(), (std::vector<std::string>{"t0", "t1"}));
  EXPECT_EQ(set.relevance_for("t1").size(), 3u);
  EXPECT_NEAR(set.relevance_for("t1").at("t3"), oracle::kDpoTable[1][3], 1e-9);
}

TEST_F(RelevanceSetTest, ResumesFromPersistentCacheWithoutBackendCalls) {
  TempDir dir("cache");
  std::vector<QueryDocPair> pairs;
  for (const char* q : {"t0", "t1", "t2"}) {
    for (const char* d : {"t3", "t4", "x00"}) pairs.emplace_back(q, d);
  }
  const SyntheticLm& inner = *lm_;
  std::atomic<int> calls{0};
  int fail_after = 14;
  ScriptedBackend flaky("table-lm", [&](const std::string& p) {
    if (++calls > fail_after) throw BackendError("boom");
    return inner.echo_logprobs(p);
  });
  RelevanceBuildOptions opt;
  BudgetLedger ledger;
  opt.ledger = &ledger;
  std::size_t completed = 0;
  {
    DpoCache cache(dir / "dpo.jsonl");
    try {
      build_relevance_set(flaky, *index_, pairs, cache, opt);
      FAIL();
    } catch (const RelevanceBuildError& e) {
      EXPECT_EQ(e.exit_code(), 2);
      completed = e.completed();
    }
    EXPECT_EQ(completed, 3u);
    EXPECT_EQ(ledger.consumed(), 3u);
  }
  // Simulate a torn final line from a crash.
  { std::ofstream(dir / "dpo.jsonl", std::ios::app) << R"({"llm_id": "tab)"; }
  DpoCache reopened(dir / "dpo.jsonl");
  EXPECT_EQ(reopened.size(), 3u);
  calls = 0;
  fail_after = 1000;
  const auto set = build_relevance_set(flaky, *index_, pairs, reopened, opt);
  EXPECT_EQ(set.entries.size(), 9u);
  EXPECT_EQ(calls, 6 * 4);
  EXPECT_EQ(ledger.consumed(), 9u);

  DpoCache fresh;
  const auto direct = build_relevance_set(*lm_, *index_, pairs, fresh, {});
  EXPECT_EQ(set.entries, direct.entries);
  calls = 0;
  const auto again = build_relevance_set(flaky, *index_, pairs, reopened, opt);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(again, set);
}

TEST_F(RelevanceSetTest, BudgetExhaustionIsExitThree) {
  std::vector<QueryDocPair> pairs{{"t0", "t1"}, {"t0", "t2"}, {"t0", "t3"}};
  BudgetLedger ledger(2);
  RelevanceBuildOptions opt;
  opt.ledger = &ledger;
  DpoCache cache;
  try {
    build_relevance_set(*lm_, *index_, pairs, cache, opt);
    FAIL();
  } catch (const RelevanceBuildError& e) {
    EXPECT_EQ(e.exit_code(), 3);
    EXPECT_EQ(e.completed(), 2u);
  }
  EXPECT_EQ(ledger.consumed(), 2u);
  EXPECT_EQ(cache.size(), 2u);
}

TEST_F(RelevanceSetTest, ParallelWorkersMatchSerial) {
  std::vector<QueryDocPair> pairs;
  for (const auto& q : records_) {
    for (const auto& d : records_) pairs.emplace_back(q.id, d.id);
  }
  DpoCache a, b;
  RelevanceBuildOptions serial, parallel;
  parallel.workers = 4;
  EXPECT_EQ(build_relevance_set(*lm_, *index_, pairs, a, serial),
            build_relevance_set(*lm_, *index_, pairs, b, parallel));
}

TEST_F(RelevanceSetTest, JsonlRoundTripAndCsvMatrix) {
  std::vector<QueryDocPair> pairs{{"t0", "t1"}, {"t0", "t2"}, {"t1", "t2"}};
  DpoCache cache;
  RelevanceBuildOptions opt;
  opt.dataset_id = "table";
  const auto set = build_relevance_set(*lm_, *index_, pairs, cache, opt, 9);
  std::stringstream ss;
  write_relevance_jsonl(ss, set);
  EXPECT_EQ(read_relevance_jsonl(ss), set);

  std::stringstream csv;
  write_relevance_csv_matrix(csv, set);
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "query_id,t1,t2");
  std::string row;
  std::getline(csv, row);
  EXPECT_EQ(row.rfind("t0,", 0), 0u);
  std::getline(csv, row);
  EXPECT_EQ(row.rfind("t1,,", 0), 0u);

  std::stringstream dup;
  write_relevance_jsonl(dup, set);
  std::string text = dup.str();
  const auto last = text.rfind('\n', text.size() - 2);
  text += text.substr(last + 1);
  std::istringstream dup_in(text);
  EXPECT_THROW(read_relevance_jsonl(dup_in), DataError);
}

}  // namespace
}  // namespace dpobench
