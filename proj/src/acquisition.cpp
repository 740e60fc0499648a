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

#include "dpobench/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "dpobench/evaluation.hpp"

namespace dpobench {

using nlohmann::json;

AcquisitionPolicy parse_acquisition_policy(std::string_view name) {
  if (name == "rlraif") return AcquisitionPolicy::kRlraif;
  if (name == "random") return AcquisitionPolicy::kRandom;
  throw ConfigError("unknown acquisition policy '" + std::string(name) + "'");
}

std::string_view to_string(AcquisitionPolicy p) {
  return p == AcquisitionPolicy::kRlraif ? "rlraif" : "random";
}

void validate(const AcquisitionConfig& c) {
  if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) throw ConfigError("beta must be finite and >= 0");
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) {
    throw ConfigError("lambda must be finite and >= 0");
  }
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  if (c.round_size == 1) throw ConfigError("round_size must be >= 2");
  if (c.docs_per_query < 2) throw ConfigError("docs_per_query must be >= 2");
  if (c.ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1");
  if (!(c.query_weight_floor > 0.0)) throw ConfigError("query_weight_floor must be > 0");
}

std::size_t resolved_round_size(const AcquisitionConfig& config, std::size_t budget) {
  if (config.round_size != 0) return config.round_size;
  return std::max(config.docs_per_query, std::min<std::size_t>(512, budget / 5));
}

std::vector<QueryDocPair> AcquisitionProblem::grid() const {
  std::vector<QueryDocPair> pairs;
  pairs.reserve(queries.size() * documents.size());
  for (const auto& q : queries) {
    for (const auto& d : documents) {
      if (q != d) pairs.emplace_back(q, d);
    }
  }
  return pairs;
}

AcquisitionProblem make_acquisition_problem(const SplitPlan& split,
                                            std::shared_ptr<const EmbeddingStore> query_embeddings,
                                            std::shared_ptr<const EmbeddingStore> doc_embeddings,
                                            std::size_t max_queries) {
  AcquisitionProblem p;
  const std::unordered_set<std::string> pool(split.sampled_documents.begin(),
                                             split.sampled_documents.end());
  for (const auto& q : split.train_query_ids) {
    if (!pool.count(q)) p.queries.push_back(q);
  }
  if (max_queries != 0 && p.queries.size() > max_queries) p.queries.resize(max_queries);
  p.documents = split.sampled_documents;
  p.query_embeddings = std::move(query_embeddings);
  p.doc_embeddings = std::move(doc_embeddings);
  if (p.queries.empty()) throw DataError("no training queries outside the document pool");
  return p;
}

namespace {

double pair_cosine(const AcquisitionProblem& p, const std::string& q, const std::string& d) {
  return cosine_relevance(p.query_embeddings->row(q), p.doc_embeddings->row(d));
}

std::size_t exploit_count(double epsilon, std::size_t m) {
  const double x = std::ceil((1.0 - epsilon) * static_cast<double>(m) - 1e-9);
  return std::min(m, static_cast<std::size_t>(std::max(0.0, x)));
}

}  // namespace

std::vector<QueryDocPair> seed_round(const AcquisitionProblem& problem,
                                     const AcquisitionConfig& config, const BudgetLedger& ledger) {
  validate(config);
  const std::size_t m = config.docs_per_query;
  const std::size_t capacity =
      std::min(resolved_round_size(config, std::min(ledger.total(), problem.grid().size())),
               ledger.remaining());
  const std::size_t n_queries = std::min(problem.queries.size(), capacity / m);
  if (n_queries == 0) {
    throw BudgetExhausted("budget of " + std::to_string(ledger.remaining()) +
                          " cannot fund one seed round of " + std::to_string(m) + " docs");
  }

  Rng rng(derive_seed(config.seed, "acquisition/seed_round"));
  std::vector<std::string> order = problem.queries;
  rng.shuffle(order);
  order.resize(n_queries);

  const std::size_t n_exploit = exploit_count(config.epsilon, m);
  std::vector<QueryDocPair> out;
  for (const auto& q : order) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& d : problem.documents) {
      if (d != q) ranked.emplace_back(pair_cosine(problem, q, d), d);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const std::size_t top = std::min(n_exploit, ranked.size());
    for (std::size_t i = 0; i < top; ++i) out.emplace_back(q, ranked[i].second);
    std::vector<std::string> rest;
    for (std::size_t i = top; i < ranked.size(); ++i) rest.push_back(ranked[i].second);
    rng.shuffle(rest);
    const std::size_t n_random = std::min(m - n_exploit, rest.size());
    for (std::size_t i = 0; i < n_random; ++i) out.emplace_back(q, rest[i]);
  }
  return out;
}

namespace {

// Sample standard deviation of each column; zero for a single row.
Eigen::VectorXd member_spread(const Eigen::MatrixXd& member_scores) {
  if (member_scores.rows() < 2) return Eigen::VectorXd::Zero(member_scores.cols());
  const Eigen::RowVectorXd mean = member_scores.colwise().mean();
  const Eigen::MatrixXd centered = member_scores.rowwise() - mean;
  return (centered.array().square().colwise().sum() / double(member_scores.rows() - 1))
      .sqrt()
      .transpose();
}

}  // namespace

Eigen::VectorXd acquisition_scores(const Eigen::MatrixXd& member_scores, double beta) {
  if (member_scores.rows() == 0) throw DataError("acquisition scores need at least one member");
  return member_scores.colwise().mean().transpose() + beta * member_spread(member_scores);
}

std::vector<ScoredCandidate> acquisition_scores(const EnsembleState& ensemble,
                                                const AcquisitionProblem& problem,
                                                const std::set<QueryDocPair>& evaluated,
                                                const AcquisitionConfig& config) {
  std::vector<ScoredCandidate> out;
  std::vector<std::string> docs;
  for (const auto& q : problem.queries) {
    docs.clear();
    for (const auto& d : problem.documents) {
      if (d != q) docs.push_back(d);
    }
    if (docs.empty()) continue;
    const auto n = static_cast<Eigen::Index>(docs.size());

    Eigen::MatrixXd member_scores;
    if (ensemble.members.empty()) {
      member_scores.resize(1, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        member_scores(0, j) = pair_cosine(problem, q, docs[static_cast<std::size_t>(j)]);
      }
    } else {
      const Combiner c = ensemble.members.front().combiner;
      const auto eq = problem.query_embeddings->row(q);
      Mat<double> H(ensemble.members.front().joint_dim(), n);
      for (Eigen::Index j = 0; j < n; ++j) {
        H.col(j) = joint_features<double>(
            eq, problem.doc_embeddings->row(docs[static_cast<std::size_t>(j)]), c);
      }
      member_scores.resize(static_cast<Eigen::Index>(ensemble.members.size()), n);
      for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
        member_scores.row(static_cast<Eigen::Index>(k)) =
            ensemble.members[k].score_columns(H).transpose();
      }
      if (config.center_per_query) {
        member_scores.colwise() -= member_scores.rowwise().mean();
      }
    }
    const Eigen::VectorXd mean = member_scores.colwise().mean().transpose();
    const Eigen::VectorXd spread = member_spread(member_scores);
    for (Eigen::Index j = 0; j < n; ++j) {
      QueryDocPair pair{q, docs[static_cast<std::size_t>(j)]};
      if (evaluated.count(pair)) continue;
      out.push_back({std::move(pair), mean(j), spread(j), mean(j) + config.beta * spread(j)});
    }
  }
  return out;
}

std::vector<QueryDocPair> select_batch(std::span<const ScoredCandidate> candidates,
                                       const EmbeddingStore& doc_embeddings,
                                       const AcquisitionConfig& config,
                                       const std::map<std::string, std::size_t>& observed_docs,
                                       std::size_t batch_size, std::uint64_t round_seed) {
  if (candidates.empty()) throw DataError("no candidate pairs remaining");
  std::map<std::string, std::vector<const ScoredCandidate*>> by_query;
  for (const auto& c : candidates) by_query[c.pair.first].push_back(&c);

  // Weighted order without replacement: key = log(U) / w, largest first.
  Rng rng(round_seed);
  std::vector<std::pair<double, std::string>> keyed;
  for (const auto& [q, cands] : by_query) {
    double w = 0.0;
    for (const auto* c : cands) w = std::max(w, c->uncertainty);
    w += config.query_weight_floor;
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    keyed.emplace_back(std::log(u) / w, q);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  std::vector<QueryDocPair> out;
  std::map<std::string, std::vector<std::string>> picked;
  std::set<const ScoredCandidate*> taken;
  bool progress = true;
  while (progress && out.size() < batch_size) {
    progress = false;
    for (const auto& [_, q] : keyed) {
      if (out.size() >= batch_size) break;
      std::vector<const ScoredCandidate*> avail;
      for (const auto* c : by_query[q]) {
        if (!taken.count(c)) avail.push_back(c);
      }
      const auto obs = observed_docs.find(q);
      const std::size_t have = (obs == observed_docs.end() ? 0 : obs->second) + picked[q].size();
      const std::size_t quota =
          std::min({config.docs_per_query, batch_size - out.size(), avail.size()});
      if (quota == 0 || (have == 0 && quota < 2)) continue;
      auto& mine = picked[q];
      for (std::size_t r = 0; r < quota; ++r) {
        const ScoredCandidate* best = nullptr;
        double best_value = -std::numeric_limits<double>::infinity();
        for (const auto* c : avail) {
          if (taken.count(c)) continue;
          double penalty = 0.0;
          if (config.lambda > 0.0 && !mine.empty()) {
            double closest = -1.0;
            for (const auto& d : mine) {
              closest = std::max(closest, cosine_relevance(doc_embeddings.row(c->pair.second),
                                                           doc_embeddings.row(d)));
            }
            penalty = config.lambda * closest;
          }
          const double value = c->score - penalty;
          if (!best || value > best_value ||
              (value == best_value && c->pair.second < best->pair.second)) {
            best = c;
            best_value = value;
          }
        }
        taken.insert(best);
        mine.push_back(best->pair.second);
        out.push_back(best->pair);
      }
      progress = true;
    }
  }
  return out;
}

std::vector<QueryDocPair> random_round(const AcquisitionProblem& problem,
                                       const std::set<QueryDocPair>& evaluated,
                                       const std::map<std::string, std::size_t>& observed_docs,
                                       std::size_t batch_size, std::uint64_t round_seed) {
  std::vector<QueryDocPair> pool;
  for (auto& p : problem.grid()) {
    if (!evaluated.count(p)) pool.push_back(std::move(p));
  }
  if (pool.empty()) throw DataError("no candidate pairs remaining");
  Rng rng(round_seed);
  rng.shuffle(pool);

  std::vector<bool> taken(pool.size(), false);
  std::map<std::string, std::size_t> in_round;
  std::vector<QueryDocPair> out;
  for (std::size_t i = 0; i < pool.size() && out.size() < batch_size; ++i) {
    if (taken[i]) continue;
    const std::string& q = pool[i].first;
    const auto obs = observed_docs.find(q);
    const std::size_t have = (obs == observed_docs.end() ? 0 : obs->second) + in_round[q];
    if (have == 0) {
      // A fresh query enters together with its next shuffled doc.
      if (batch_size - out.size() < 2) continue;
      std::size_t j = i + 1;
      while (j < pool.size() && (taken[j] || pool[j].first != q)) ++j;
      if (j == pool.size()) continue;
      taken[i] = taken[j] = true;
      out.push_back(pool[i]);
      out.push_back(pool[j]);
      in_round[q] += 2;
    } else {
      taken[i] = true;
      out.push_back(pool[i]);
      ++in_round[q];
    }
  }
  return out;
}

EnsembleState train_ensemble(std::span<const RewardObservation> observations,
                             const AcquisitionProblem& problem, const AcquisitionConfig& config,
                             std::vector<std::vector<double>>* loss_traces,
                             std::size_t* n_triples) {
  const std::size_t E = config.ensemble_size;
  std::vector<TrainResult> results(E);
  std::vector<std::exception_ptr> errors(E);
  auto job = [&](std::size_t k) {
    try {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seed, "ensemble/" + std::to_string(k));
      results[k] = train(observations, *problem.query_embeddings, *problem.doc_embeddings, tc);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (config.workers > 1 && E > 1) {
    std::vector<std::jthread> pool;
    std::atomic<std::size_t> next{0};
    const unsigned n = std::min<unsigned>(config.workers, static_cast<unsigned>(E));
    for (unsigned w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next.fetch_add(1); k < E; k = next.fetch_add(1)) job(k);
      });
    }
  } else {
    for (std::size_t k = 0; k < E; ++k) job(k);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  EnsembleState state;
  if (loss_traces) loss_traces->clear();
  for (auto& r : results) {
    if (loss_traces) loss_traces->push_back(std::move(r.loss_trace));
    if (n_triples) *n_triples = r.n_triples;
    state.members.push_back(std::move(r.model));
  }
  return state;
}

namespace {

AdapterCheckpoint to_checkpoint(const EnsembleState& ensemble, const AcquisitionProblem& problem,
                                const AcquisitionConfig& config) {
  AdapterCheckpoint c;
  c.base_model_id = problem.query_embeddings->model_id();
  c.members = ensemble.members;
  c.provenance = {{"policy", std::string(to_string(config.policy))},
                  {"seed", config.seed},
                  {"ensemble_size", config.ensemble_size},
                  {"combiner", std::string(to_string(config.train.combiner))},
                  {"inner_dim", config.train.inner_dim},
                  {"reward_transform", std::string(to_string(config.train.reward_transform))}};
  return c;
}

}  // namespace

AcquisitionResult run_acquisition(const AcquisitionProblem& problem, const AcquisitionContext& ctx,
                                  const AcquisitionConfig& config) {
  validate(config);
  if (!ctx.backend || !ctx.records || !ctx.ledger) {
    throw ConfigError("acquisition needs a backend, records and a ledger");
  }
  if (!problem.query_embeddings || !problem.doc_embeddings) {
    throw ConfigError("acquisition needs embeddings");
  }
  DpoCache local_cache;
  DpoCache& cache = ctx.cache ? *ctx.cache : local_cache;
  BudgetLedger& ledger = *ctx.ledger;

  const std::vector<QueryDocPair> grid = problem.grid();
  const std::size_t round_size =
      resolved_round_size(config, std::min(ledger.total(), grid.size()));

  AcquisitionResult result;
  result.policy = config.policy;
  std::map<QueryDocPair, double> observed;
  std::set<QueryDocPair> evaluated;
  std::map<std::string, std::size_t> observed_docs;
  EnsembleState ensemble;
  std::size_t last_triples = 0;

  RelevanceBuildOptions opts;
  opts.dataset_id = ctx.dataset_id;
  opts.policy = ctx.rbar_policy;
  opts.retry = ctx.retry;
  opts.ledger = &ledger;
  opts.charge_cache_hits = true;
  opts.workers = config.workers;

  for (std::size_t round = 0; round < config.max_rounds; ++round) {
    if (ledger.remaining() == 0 || evaluated.size() == grid.size()) break;
    const std::size_t batch = std::min(round_size, ledger.remaining());
    const std::uint64_t round_seed =
        derive_seed(config.seed, "acquisition/round/" + std::to_string(round));

    std::vector<QueryDocPair> requests;
    if (config.policy == AcquisitionPolicy::kRandom) {
      requests = random_round(problem, evaluated, observed_docs, batch, round_seed);
    } else if (round == 0) {
      requests = seed_round(problem, config, ledger);
    } else {
      const auto scored = acquisition_scores(ensemble, problem, evaluated, config);
      requests = select_batch(scored, *problem.doc_embeddings, config, observed_docs, batch,
                              round_seed);
    }
    if (requests.empty()) {
      result.stop_reason = "no selectable pairs left under the pairing rule";
      break;
    }

    std::size_t completed = 0;
    bool failed = false;
    auto record = [&](const QueryDocPair& pair, double value) {
      if (evaluated.insert(pair).second) {
        observed[pair] = value;
        ++observed_docs[pair.first];
      }
      ++completed;
    };
    try {
      const DpoRelevanceSet got =
          build_relevance_set(*ctx.backend, *ctx.records, requests, cache, opts);
      for (const auto& [pair, score] : got.entries) record(pair, score.value);
    } catch (const RelevanceBuildError& e) {
      for (const auto& pair : requests) {
        const DpoCacheKey key{ctx.backend->id(), std::string(kTemplateVersion), pair.first,
                              pair.second, ctx.rbar_policy};
        if (!ledger.charged(pair)) continue;
        if (auto hit = cache.find(key)) record(pair, hit->value);
      }
      result.stop_reason = e.what();
      result.exit_code = e.exit_code();
      failed = true;
    }
    ledger.log_round(round, requests.size(), completed);

    RoundRecord rec;
    rec.round = round;
    rec.requested = requests.size();
    rec.completed = completed;
    rec.consumed = ledger.consumed();

    result.observations.clear();
    for (const auto& [pair, value] : observed) {
      result.observations.push_back({pair.first, pair.second, value});
    }
    if (!failed && completed > 0) {
      try {
        std::vector<std::vector<double>> traces;
        ensemble = train_ensemble(result.observations, problem, config, &traces, &last_triples);
        result.loss_traces = std::move(traces);
      } catch (const DataError&) {
        // Every reward tied so far: keep the previous ensemble.
      }
    }
    rec.observations = result.observations.size();
    rec.triples = ensemble.members.empty() ? 0 : last_triples;
    for (const auto& t : result.loss_traces) {
      if (!t.empty()) rec.member_losses.push_back(t.back());
    }
    for (const auto& [q, n] : observed_docs) {
      if (n == 1) rec.unpaired_queries.push_back(q);
    }
    if (ctx.validation && ctx.validation->relevance && !ensemble.members.empty()) {
      const AdapterRetriever retriever("rlraif-round", to_checkpoint(ensemble, problem, config),
                                       problem.query_embeddings, problem.doc_embeddings);
      const RankingQuality quality =
          evaluate_retriever(retriever, *ctx.validation->relevance, ctx.validation->queries,
                             ctx.validation->documents);
      rec.ndcg10 = quality.ndcg10;
      rec.ndcg50 = quality.ndcg50;
      rec.simple_regret = quality.simple_regret;
    }
    result.history.push_back(std::move(rec));
    if (failed) break;
  }

  if (!ensemble.members.empty()) result.model = to_checkpoint(ensemble, problem, config);
  return result;
}

AcquisitionResult run_rlraif(const AcquisitionProblem& problem, const AcquisitionContext& ctx,
                             AcquisitionConfig config) {
  config.policy = AcquisitionPolicy::kRlraif;
  return run_acquisition(problem, ctx, config);
}

AcquisitionResult run_random_baseline(const AcquisitionProblem& problem,
                                      const AcquisitionContext& ctx, AcquisitionConfig config) {
  config.policy = AcquisitionPolicy::kRandom;
  return run_acquisition(problem, ctx, config);
}

void write_history_jsonl(std::ostream& out, const AcquisitionResult& result) {
  for (const auto& r : result.history) {
    json j{{"round", r.round},
           {"policy", std::string(to_string(result.policy))},
           {"requested", r.requested},
           {"completed", r.completed},
           {"consumed", r.consumed},
           {"observations", r.observations},
           {"triples", r.triples},
           {"member_losses", r.member_losses},
           {"unpaired_queries", r.unpaired_queries}};
    if (r.ndcg10) j["ndcg10"] = *r.ndcg10;
    if (r.ndcg50) j["ndcg50"] = *r.ndcg50;
    if (r.simple_regret) j["simple_regret"] = *r.simple_regret;
    out << j.dump() << '\n';
  }
  out << json{{"summary", true},
              {"policy", std::string(to_string(result.policy))},
              {"rounds", result.history.size()},
              {"observations", result.observations.size()},
              {"stop_reason", result.stop_reason},
              {"exit_code", result.exit_code}}
             .dump()
      << '\n';
}

void write_budget_curve_header(std::ostream& out) {
  out << "policy,seed,round,consumed,ndcg10,ndcg50,simple_regret\n";
}

void write_budget_curve_rows(std::ostream& out, const AcquisitionResult& result,
                             std::uint64_t seed) {
  char buf[64];
  auto opt = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  };
  for (const auto& r : result.history) {
    out << to_string(result.policy) << ',' << seed << ',' << r.round << ',' << r.consumed << ','
        << opt(r.ndcg10) << ',' << opt(r.ndcg50) << ',' << opt(r.simple_regret) << '\n';
  }
}

}  // namespace dpobench
