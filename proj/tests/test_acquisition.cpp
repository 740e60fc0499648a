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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "dpobench/acquisition.hpp"
#include "dpobench/benchmark.hpp"
#include "dpobench/errors.hpp"
#include "test_support.hpp"

namespace dpobench {
namespace {

std::shared_ptr<const EmbeddingStore> angle_store(const std::string& prefix,
                                                  std::span<const double> angles) {
  EmbeddingMatrix m(static_cast<Eigen::Index>(angles.size()), 2);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = static_cast<float>(std::cos(angles[i]));
    m(static_cast<Eigen::Index>(i), 1) = static_cast<float>(std::sin(angles[i]));
    ids.push_back(prefix + std::to_string(i));
  }
  return std::make_shared<const EmbeddingStore>("angles", ids, m);
}

AcquisitionProblem angle_problem() {
  AcquisitionProblem p;
  p.query_embeddings = angle_store("q", oracle::kSeedRoundQueryAngles);
  p.doc_embeddings = angle_store("d", oracle::kSeedRoundDocAngles);
  p.queries = p.query_embeddings->ids();
  p.documents = p.doc_embeddings->ids();
  return p;
}

TEST(SeedRound, MatchesReplayOracle) {
  const auto p = angle_problem();
  AcquisitionConfig c;
  c.seed = 5;
  c.epsilon = 0.5;
  c.docs_per_query = 4;
  c.round_size = 12;
  const auto got = seed_round(p, c, BudgetLedger{});
  ASSERT_EQ(got.size(), oracle::kSeedRound.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].first, oracle::kSeedRound[i].first) << i;
    EXPECT_EQ(got[i].second, oracle::kSeedRound[i].second) << i;
  }
}

TEST(SeedRound, EpsilonBoundaries) {
  const auto p = angle_problem();
  AcquisitionConfig c;
  c.epsilon = 0.0;
  c.docs_per_query = 2;
  c.round_size = 6;
  for (const auto& [q, d] : seed_round(p, c, BudgetLedger{})) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& doc : p.documents) {
      ranked.emplace_back(-cosine_relevance(p.query_embeddings->row(q), p.doc_embeddings->row(doc)),
                          doc);
    }
    std::sort(ranked.begin(), ranked.end());
    EXPECT_TRUE(d == ranked[0].second || d == ranked[1].second) << q << " " << d;
  }

  // eps = 1: the docs come from the shuffle, so different seeds disagree.
  c.epsilon = 1.0;
  c.docs_per_query = 3;
  c.round_size = 3;
  std::set<std::vector<QueryDocPair>> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    c.seed = s;
    const auto r = seed_round(p, c, BudgetLedger{});
    EXPECT_EQ(r.size(), 3u);
    seen.insert(r);
  }
  EXPECT_GT(seen.size(), 10u);
}

TEST(SeedRound, BudgetBelowOneQueryIsExhaustion) {
  const auto p = angle_problem();
  AcquisitionConfig c;
  c.docs_per_query = 4;
  EXPECT_THROW(seed_round(p, c, BudgetLedger(3)), BudgetExhausted);
  EXPECT_EQ(seed_round(p, c, BudgetLedger(9)).size(), 4u);
  c.round_size = 8;
  EXPECT_EQ(seed_round(p, c, BudgetLedger(9)).size(), 8u);
}

TEST(AcquisitionScores, UcbArithmetic) {
  Eigen::MatrixXd two(2, 1);
  two << 0.2, 0.6;
  EXPECT_NEAR(acquisition_scores(two, 1.0)(0), oracle::kUcbTwoMembers, 1e-12);
  EXPECT_NEAR(acquisition_scores(two, 0.0)(0), 0.4, 1e-15);
  Eigen::MatrixXd one(1, 3);
  one << 0.1, -2.0, 5.0;
  EXPECT_EQ(acquisition_scores(one, 10.0), one.row(0).transpose());
}

TEST(Config, Validation) {
  AcquisitionConfig c;
  EXPECT_NO_THROW(validate(c));
  using Mutator = void (*)(AcquisitionConfig&);
  const Mutator mutators[] = {
      [](AcquisitionConfig& x) { x.beta = -1; },      [](AcquisitionConfig& x) { x.lambda = NAN; },
      [](AcquisitionConfig& x) { x.epsilon = 1.5; },  [](AcquisitionConfig& x) { x.round_size = 1; },
      [](AcquisitionConfig& x) { x.docs_per_query = 1; },
      [](AcquisitionConfig& x) { x.ensemble_size = 0; }};
  for (Mutator bad : mutators) {
    AcquisitionConfig x;
    bad(x);
    EXPECT_THROW(validate(x), ConfigError);
  }
  EXPECT_EQ(resolved_round_size(c, 150), 30u);
  EXPECT_EQ(resolved_round_size(c, 100000), 512u);
  EXPECT_EQ(resolved_round_size(c, 3), 5u);
  EXPECT_EQ(parse_acquisition_policy("random"), AcquisitionPolicy::kRandom);
  EXPECT_THROW(parse_acquisition_policy("greedy"), ConfigError);
}

// One query, five docs; the greedy rule traced by hand.
struct HandWorld {
  std::shared_ptr<const EmbeddingStore> docs;
  std::vector<ScoredCandidate> cands;
  HandWorld() {
    const double pi = std::numbers::pi;
    const double angles[] = {0.0, 0.1, pi / 2, pi, 0.05};
    docs = angle_store("d", angles);
    const double scores[] = {1.0, 0.95, 0.7, 0.3, 0.9};
    for (int i = 0; i < 5; ++i) {
      cands.push_back({{"q", "d" + std::to_string(i)}, scores[i], 0.1, scores[i]});
    }
  }
};

std::vector<std::string> docs_of(const std::vector<QueryDocPair>& pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.second);
  return out;
}

TEST(SelectBatch, HandTracedGreedy) {
  HandWorld w;
  AcquisitionConfig c;
  c.lambda = 0.5;
  // d0 (1.0); then d3 (0.3 + 0.5) beats d2 (0.7 - 0); then d2 (0.7) beats d1 (0.95 - 0.4975).
  EXPECT_EQ(docs_of(select_batch(w.cands, *w.docs, c, {}, 3, 1)),
            (std::vector<std::string>{"d0", "d3", "d2"}));
  c.lambda = 0.0;
  EXPECT_EQ(docs_of(select_batch(w.cands, *w.docs, c, {}, 3, 1)),
            (std::vector<std::string>{"d0", "d1", "d4"}));
}

TEST(SelectBatch, HugeLambdaSkipsDuplicates) {
  const double angles[] = {0.3, 0.3, 0.3 + std::numbers::pi / 2};
  auto docs = angle_store("d", angles);
  std::vector<ScoredCandidate> cands{
      {{"q", "d0"}, 1.0, 0, 1.0}, {{"q", "d1"}, 0.99, 0, 0.99}, {{"q", "d2"}, 0.1, 0, 0.1}};
  AcquisitionConfig c;
  c.lambda = 1e6;
  const auto got = docs_of(select_batch(cands, *docs, c, {}, 2, 3));
  EXPECT_EQ(got, (std::vector<std::string>{"d0", "d2"}));
}

TEST(SelectBatch, PairingRuleAndErrors) {
  HandWorld w;
  AcquisitionConfig c;
  // A fresh query cannot enter with a single doc.
  EXPECT_TRUE(select_batch(w.cands, *w.docs, c, {}, 1, 1).empty());
  EXPECT_EQ(select_batch(w.cands, *w.docs, c, {{"q", 2}}, 1, 1).size(), 1u);
  EXPECT_THROW(select_batch({}, *w.docs, c, {}, 4, 1), DataError);
}

bool paired_queries_ok(const std::vector<QueryDocPair>& pairs,
                       const std::map<std::string, std::size_t>& observed) {
  std::map<std::string, std::size_t> n;
  for (const auto& p : pairs) ++n[p.first];
  for (const auto& [q, k] : n) {
    const auto it = observed.find(q);
    if ((it == observed.end() ? 0 : it->second) + k < 2) return false;
  }
  return true;
}

TEST(RandomRound, ReproducibleAndPaired) {
  const auto p = angle_problem();
  for (std::size_t batch : {1u, 2u, 3u, 7u}) {
    const auto a = random_round(p, {}, {}, batch, 42);
    EXPECT_EQ(a, random_round(p, {}, {}, batch, 42));
    EXPECT_LE(a.size(), batch);
    EXPECT_TRUE(paired_queries_ok(a, {}));
    EXPECT_EQ(std::set<QueryDocPair>(a.begin(), a.end()).size(), a.size());
  }
  EXPECT_TRUE(random_round(p, {}, {}, 1, 42).empty());
  EXPECT_NE(random_round(p, {}, {}, 6, 1), random_round(p, {}, {}, 6, 2));
}

// Small synthetic world shared by the end-to-end loop tests.
class LoopTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticSuiteConfig sc;
    sc.seed = 77;
    sc.n_records = 40;
    trial_ = make_synthetic_trial(sc, {6, 16}, 8).release();
  }
  static void TearDownTestSuite() { delete trial_; }

  static AcquisitionConfig cheap() {
    AcquisitionConfig c;
    c.seed = 3;
    c.ensemble_size = 3;
    c.train.inner_dim = 16;
    c.train.epochs = 8;
    return c;
  }
  static SyntheticTrial* trial_;
};
SyntheticTrial* LoopTest::trial_ = nullptr;

TEST_F(LoopTest, SingleSeedRoundBudget) {
  auto c = cheap();
  c.round_size = 10;
  const auto out = run_policy(*trial_, c, 10);
  ASSERT_EQ(out.run.history.size(), 1u);
  EXPECT_EQ(out.run.observations.size(), 10u);
  EXPECT_EQ(out.run.model.members.size(), 3u);
  EXPECT_EQ(out.run.exit_code, 0);
}

TEST_F(LoopTest, DeterministicHistoryAndInvariants) {
  for (auto policy : {AcquisitionPolicy::kRlraif, AcquisitionPolicy::kRandom}) {
    auto c = cheap();
    c.policy = policy;
    const auto a = run_policy(*trial_, c, 40, true);
    const auto b = run_policy(*trial_, c, 40, true);
    std::ostringstream ha, hb;
    write_history_jsonl(ha, a.run);
    write_history_jsonl(hb, b.run);
    EXPECT_EQ(ha.str(), hb.str());
    EXPECT_EQ(a.run.model, b.run.model);
    EXPECT_EQ(a.run.observations.size(), 40u);
    std::size_t prev = 0;
    for (const auto& r : a.run.history) {
      EXPECT_GT(r.observations, prev);
      prev = r.observations;
      EXPECT_LE(r.consumed, 40u);
      EXPECT_TRUE(r.ndcg10.has_value());
    }
    std::map<std::string, std::size_t> per_query;
    for (const auto& o : a.run.observations) ++per_query[o.query_id];
    for (const auto& [q, n] : per_query) {
      const auto& unpaired = a.run.history.back().unpaired_queries;
      EXPECT_TRUE(n >= 2 || std::count(unpaired.begin(), unpaired.end(), q)) << q;
    }
  }
}

TEST_F(LoopTest, ExhaustiveBudgetSeesTheSameData) {
  auto c = cheap();
  c.ensemble_size = 1;
  c.train.epochs = 2;
  const std::size_t all = trial_->grid_size();
  c.policy = AcquisitionPolicy::kRlraif;
  const auto r = run_policy(*trial_, c, all);
  c.policy = AcquisitionPolicy::kRandom;
  const auto x = run_policy(*trial_, c, all);
  EXPECT_EQ(r.run.observations.size(), all);
  ASSERT_EQ(r.run.observations.size(), x.run.observations.size());
  for (std::size_t i = 0; i < all; ++i) {
    EXPECT_EQ(r.run.observations[i].query_id, x.run.observations[i].query_id);
    EXPECT_EQ(r.run.observations[i].doc_id, x.run.observations[i].doc_id);
    EXPECT_EQ(r.run.observations[i].reward, x.run.observations[i].reward);
  }
  // Same data and the same member seeds: the final models coincide too.
  EXPECT_EQ(r.run.model.members, x.run.model.members);
}

TEST_F(LoopTest, DegenerateModeIsGreedyExploitation) {
  auto c = cheap();
  c.beta = 0.0;
  c.lambda = 0.0;
  c.epsilon = 0.0;
  c.ensemble_size = 1;
  BudgetLedger ledger;
  const auto seed = seed_round(trial_->problem, c, ledger);
  std::vector<RewardObservation> obs;
  std::set<QueryDocPair> evaluated;
  std::map<std::string, std::size_t> observed;
  for (const auto& [q, d] : seed) {
    obs.push_back({q, d, 0.0});
    evaluated.insert({q, d});
    ++observed[q];
  }
  DpoCache cache;
  const auto scored_set = build_relevance_set(*trial_->lm, *trial_->index, seed, cache, {});
  for (auto& o : obs) o.reward = scored_set.entries.at({o.query_id, o.doc_id}).value;
  const auto ens = train_ensemble(obs, trial_->problem, c);
  const auto cands = acquisition_scores(ens, trial_->problem, evaluated, c);
  for (const auto& s : cands) EXPECT_EQ(s.uncertainty, 0.0);
  const auto picked = select_batch(cands, *trial_->problem.doc_embeddings, c, observed, 12, 9);
  std::map<std::string, std::vector<std::string>> by_q;
  for (const auto& [q, d] : picked) by_q[q].push_back(d);
  for (const auto& [q, docs] : by_q) {
    std::vector<const ScoredCandidate*> mine;
    for (const auto& s : cands) {
      if (s.pair.first == q) mine.push_back(&s);
    }
    std::stable_sort(mine.begin(), mine.end(), [](auto* a, auto* b) {
      return a->mean != b->mean ? a->mean > b->mean : a->pair.second < b->pair.second;
    });
    for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_EQ(docs[i], mine[i]->pair.second);
  }
}

TEST_F(LoopTest, BackendFailureKeepsLastModelAndLedger) {
  const SyntheticLm& lm = *trial_->lm;
  std::atomic<int> calls{0};
  testing::ScriptedBackend flaky(lm.id(), [&](const std::string& p) {
    if (++calls > 4 * 25) throw BackendError("down");
    return lm.echo_logprobs(p);
  });
  BudgetLedger ledger(60);
  AcquisitionContext ctx;
  ctx.backend = &flaky;
  ctx.records = trial_->index.get();
  ctx.ledger = &ledger;
  auto c = cheap();
  c.round_size = 20;
  const auto res = run_acquisition(trial_->problem, ctx, c);
  EXPECT_EQ(res.exit_code, 2);
  EXPECT_FALSE(res.stop_reason.empty());
  EXPECT_EQ(res.observations.size(), 25u);
  EXPECT_EQ(ledger.consumed(), 25u);
  ASSERT_EQ(res.history.size(), 2u);
  EXPECT_EQ(res.history[1].completed, 5u);
  EXPECT_EQ(res.model.members.size(), 3u);  // trained on round 0 only
  EXPECT_EQ(res.history[1].triples, res.history[0].triples);
}

TEST_F(LoopTest, BudgetCurveRows) {
  auto c = cheap();
  const auto out = run_policy(*trial_, c, 30, true);
  std::ostringstream csv;
  write_budget_curve_header(csv);
  write_budget_curve_rows(csv, out.run, 3);
  const std::string s = csv.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + static_cast<long>(out.run.history.size()));
  EXPECT_EQ(s.substr(0, s.find('\n')), "policy,seed,round,consumed,ndcg10,ndcg50,simple_regret");
}

}  // namespace
}  // namespace dpobench
