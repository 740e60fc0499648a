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

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "dpobench/cli.hpp"
#include "dpobench/errors.hpp"
#include "dpobench/evaluation.hpp"
#include "dpobench/metrics.hpp"
#include "dpobench/rng.hpp"

namespace dpobench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exclusive advisory lock on <out>/.lock for the life of a command.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path p = dir / ".lock";
    fd_ = ::open(p.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw ConfigError("cannot create " + p.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw ConfigError("output directory " + dir.string() + " is locked by another run");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw DataError("write failed for " + path.string());
}

std::string stem(const std::string& dataset, const std::string& llm, std::size_t trial) {
  return dataset + "__" + llm + "__t" + std::to_string(trial);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct DatasetContext {
  const DatasetEntry* entry = nullptr;
  std::shared_ptr<const std::vector<McqRecord>> records;
  std::unique_ptr<RecordIndex> index;
  std::shared_ptr<const EmbeddingStore> queries;
  std::shared_ptr<const EmbeddingStore> docs;
  std::optional<SyntheticLmSpec> lm;
};

std::unique_ptr<DatasetContext> load_context(const RunConfig& c, const DatasetEntry& d) {
  auto ctx = std::make_unique<DatasetContext>();
  ctx->entry = &d;
  if (d.kind == DatasetKind::kSynthetic) {
    SyntheticSuiteConfig sc = d.suite;
    sc.seed = c.dataset_seed(d);
    SyntheticSuite suite = make_synthetic_suite(sc);
    ctx->records = std::make_shared<const std::vector<McqRecord>>(std::move(suite.records));
    ctx->queries = suite.query_embeddings;
    ctx->docs = suite.doc_embeddings;
    ctx->lm = std::move(suite.lm);
  } else {
    ctx->records = std::make_shared<const std::vector<McqRecord>>(load_dataset(d.path));
    if (!d.embeddings.empty()) {
      ctx->queries = std::make_shared<const EmbeddingStore>(load_embeddings(d.embeddings));
      ctx->docs = ctx->queries;
    } else {
      ctx->queries = std::make_shared<const EmbeddingStore>(load_embeddings(d.query_embeddings));
      ctx->docs = std::make_shared<const EmbeddingStore>(load_embeddings(d.doc_embeddings));
    }
    for (const auto& r : *ctx->records) {
      if (!ctx->queries->contains(r.id) || !ctx->docs->contains(r.id)) {
        throw DataError("dataset " + d.name + ": no embedding for record " + r.id);
      }
    }
  }
  ctx->index = std::make_unique<RecordIndex>(*ctx->records);
  return ctx;
}

std::unique_ptr<LogprobBackend> make_backend(const LlmEntry& l, const DatasetContext& ctx) {
  if (l.kind == LlmKind::kHttp) {
    HttpEndpointConfig h = l.http;
    if (!l.api_key_env.empty()) {
      const char* key = std::getenv(l.api_key_env.c_str());
      if (!key) throw ConfigError("environment variable " + l.api_key_env + " is not set");
      h.api_key = key;
    }
    return std::make_unique<HttpEchoBackend>(std::move(h));
  }
  if (!l.spec.empty()) {
    std::ifstream in(l.spec);
    if (!in) throw ConfigError("cannot open llm spec " + l.spec.string());
    try {
      return std::make_unique<SyntheticLm>(synthetic_spec_from_json(json::parse(in)));
    } catch (const json::exception& e) {
      throw ConfigError("llm spec " + l.spec.string() + ": " + e.what());
    }
  }
  if (!ctx.lm) throw ConfigError("llm " + l.name + " has no spec for dataset " + ctx.entry->name);
  return std::make_unique<SyntheticLm>(*ctx.lm);
}

std::string substitute(std::string s, const std::string& key, const std::string& value) {
  for (std::size_t pos; (pos = s.find(key)) != std::string::npos;) s.replace(pos, key.size(), value);
  return s;
}

std::unique_ptr<Retriever> make_retriever(const RunConfig& c, const RetrieverEntry& r,
                                          const DatasetContext& ctx, const std::string& llm,
                                          std::size_t trial) {
  switch (r.kind) {
    case RetrieverKindEntry::kCosine:
      return std::make_unique<CosineRetriever>(r.name, ctx.queries, ctx.docs);
    case RetrieverKindEntry::kAdapter: {
      std::string rel = substitute(r.checkpoint, "{dataset}", ctx.entry->name);
      rel = substitute(rel, "{llm}", llm);
      rel = substitute(rel, "{trial}", std::to_string(trial));
      const fs::path p = c.out / rel;
      if (!fs::exists(p)) throw DataError("retriever " + r.name + ": missing checkpoint " + p.string());
      AdapterCheckpoint ck = load_checkpoint(p);
      if (ck.base_model_id != ctx.queries->model_id()) {
        throw DataError("checkpoint " + p.string() + " was trained on embeddings '" +
                        ck.base_model_id + "', dataset uses '" + ctx.queries->model_id() + "'");
      }
      return std::make_unique<AdapterRetriever>(r.name, std::move(ck), ctx.queries, ctx.docs);
    }
    case RetrieverKindEntry::kExternal: {
      HttpEndpointConfig h = r.http;
      if (!r.api_key_env.empty()) {
        const char* key = std::getenv(r.api_key_env.c_str());
        if (!key) throw ConfigError("environment variable " + r.api_key_env + " is not set");
        h.api_key = key;
      }
      return std::make_unique<ExternalRetriever>(
          r.name, std::make_shared<HttpRerankEndpoint>(std::move(h)), ctx.records);
    }
  }
  throw ConfigError("unknown retriever kind");
}

std::vector<std::string> pool_of(const DpoRelevanceSet& set) {
  std::set<std::string> docs;
  for (const auto& [key, _] : set.entries) docs.insert(key.second);
  return {docs.begin(), docs.end()};
}

void write_resolved(const RunConfig& c, const std::string& command) {
  write_file(c.out / (command + ".config.ini"), [&](std::ostream& o) {
    o << "; resolved configuration of `" << command << "`\n";
    write_resolved_config(o, c);
  });
}

RelevanceBuildOptions build_options(const RunConfig& c, const std::string& dataset,
                                    BudgetLedger* ledger) {
  RelevanceBuildOptions o;
  o.dataset_id = dataset;
  o.policy = c.rbar_policy;
  o.retry = c.retry;
  o.ledger = ledger;
  o.workers = c.workers;
  return o;
}

fs::path cache_path(const RunConfig& c, const std::string& dataset, const std::string& llm) {
  return c.out / "cache" / (dataset + "__" + llm + ".jsonl");
}

int cmd_score(const RunConfig& c, std::ostream& log) {
  BudgetLedger ledger(c.budget_on_cli ? *c.budget : BudgetLedger::kUnlimited);
  for (const auto& d : c.datasets) {
    const auto ctx = load_context(c, d);
    for (const auto& l : c.llms) {
      const auto backend = make_backend(l, *ctx);
      fs::create_directories(c.out / "cache");
      DpoCache cache(cache_path(c, d.name, l.name));
      for (std::size_t t = 0; t < c.trials; ++t) {
        const SplitPlan split = make_split(*ctx->records, c.trial_seed(t), c.subsample);
        write_file(c.out / "splits" / (d.name + "__t" + std::to_string(t) + ".jsonl"),
                   [&](std::ostream& o) { write_split_jsonl(o, split); });
        const std::size_t before = ledger.consumed();
        DpoRelevanceSet set;
        try {
          set = build_relevance_set(*backend, *ctx->index, split, cache,
                                    build_options(c, d.name, &ledger));
        } catch (const RelevanceBuildError& e) {
          log << "score " << stem(d.name, l.name, t) << ": " << e.what() << " after "
              << e.completed() << " pairs; progress kept in the cache\n";
          return e.exit_code();
        }
        const std::string s = stem(d.name, l.name, t);
        write_file(c.out / "relevance" / (s + ".jsonl"),
                   [&](std::ostream& o) { write_relevance_jsonl(o, set); });
        write_file(c.out / "relevance" / (s + ".csv"),
                   [&](std::ostream& o) { write_relevance_csv_matrix(o, set); });
        log << "score " << s << ": " << set.entries.size() << " pairs, "
            << ledger.consumed() - before << " new\n";
      }
    }
  }
  return 0;
}

void write_reports(const RunConfig& c, const std::vector<EvalCell>& cells) {
  const EvalReport report = aggregate(cells);
  write_file(c.out / "leaderboard.csv", [&](std::ostream& o) { write_leaderboard_csv(o, report); });
  write_file(c.out / "leaderboard.md",
             [&](std::ostream& o) { write_leaderboard_markdown(o, report); });
  write_file(c.out / "breakdown.md", [&](std::ostream& o) { write_breakdown_markdown(o, report); });
}

int cmd_evaluate(const RunConfig& c, std::ostream& log) {
  if (c.retrievers.empty()) throw ConfigError("evaluate needs at least one [retriever.*] section");
  std::vector<EvalCell> cells;
  for (const auto& d : c.datasets) {
    const auto ctx = load_context(c, d);
    for (const auto& l : c.llms) {
      for (std::size_t t = 0; t < c.trials; ++t) {
        const std::string s = stem(d.name, l.name, t);
        const fs::path p = c.out / "relevance" / (s + ".jsonl");
        std::ifstream in(p);
        if (!in) throw DataError("missing relevance set " + p.string() + " (run score first)");
        const DpoRelevanceSet set = read_relevance_jsonl(in);
        if (set.trial_seed != c.trial_seed(t)) {
          throw DataError("relevance set " + p.string() + " belongs to another seed; rerun score");
        }
        const auto queries = set.query_ids();
        const auto pool = pool_of(set);
        for (const auto& r : c.retrievers) {
          const auto retriever = make_retriever(c, r, *ctx, l.name, t);
          const RankingQuality q = evaluate_retriever(*retriever, set, queries, pool);
          EvalCell cell;
          cell.model_id = r.name;
          cell.organization = r.organization;
          cell.dataset_id = d.name;
          cell.llm_id = l.name;
          cell.trial_seed = set.trial_seed;
          cell.ndcg10 = q.ndcg10;
          cell.ndcg50 = q.ndcg50;
          cell.simple_regret = q.simple_regret;
          cell.n_queries = q.n_queries;
          cells.push_back(cell);
          log << "evaluate " << s << " " << r.name << ": nDCG@10 " << fixed4(q.ndcg10) << '\n';
        }
      }
    }
  }
  write_file(c.out / "cells.csv", [&](std::ostream& o) { write_cells_csv(o, cells); });
  write_reports(c, cells);
  return 0;
}

// Held-out ground truth through the persistent cache: free when score ran.
DpoRelevanceSet held_out_set(const RunConfig& c, const LogprobBackend& backend,
                             const DatasetContext& ctx, const SplitPlan& split, DpoCache& cache) {
  return build_relevance_set(backend, *ctx.index, split, cache,
                             build_options(c, ctx.entry->name, nullptr));
}

int cmd_train(const RunConfig& c, std::ostream& log) {
  if (!c.budget) throw ConfigError("train needs a budget: pass --budget or set [run] budget");
  for (const auto& d : c.datasets) {
    const auto ctx = load_context(c, d);
    for (const auto& l : c.llms) {
      const auto backend = make_backend(l, *ctx);
      fs::create_directories(c.out / "cache");
      DpoCache cache(cache_path(c, d.name, l.name));
      for (std::size_t t = 0; t < c.trials; ++t) {
        const std::string s = stem(d.name, l.name, t);
        const SplitPlan split = make_split(*ctx->records, c.trial_seed(t), c.subsample);
        const AcquisitionProblem problem =
            make_acquisition_problem(split, ctx->queries, ctx->docs, c.max_train_queries);

        // Rounds are scored on the held-out grid only when score already ran.
        std::optional<DpoRelevanceSet> held_out;
        ValidationSet validation;
        if (fs::exists(c.out / "relevance" / (s + ".jsonl"))) {
          held_out = held_out_set(c, *backend, *ctx, split, cache);
          validation = {split.sampled_test_queries, split.sampled_documents, &*held_out};
        }

        BudgetLedger ledger(*c.budget);
        AcquisitionContext actx;
        actx.backend = backend.get();
        actx.records = ctx->index.get();
        actx.cache = &cache;
        actx.ledger = &ledger;
        actx.dataset_id = d.name;
        actx.rbar_policy = c.rbar_policy;
        actx.retry = c.retry;
        actx.validation = held_out ? &validation : nullptr;
        AcquisitionConfig ac = c.acquisition;
        ac.seed = derive_seed(c.seed, "acquisition/" + s);
        const AcquisitionResult res = run_acquisition(problem, actx, ac);

        if (!res.model.members.empty()) {
          fs::create_directories(c.out / "checkpoints");
          save_checkpoint(c.out / "checkpoints" / (s + ".json"), res.model);
        }
        write_file(c.out / "history" / (s + ".jsonl"),
                   [&](std::ostream& o) { write_history_jsonl(o, res); });
        write_file(c.out / "history" / (s + ".loss.csv"),
                   [&](std::ostream& o) { write_loss_trace_csv(o, res.loss_traces); });
        write_file(c.out / "history" / (s + ".curve.csv"), [&](std::ostream& o) {
          write_budget_curve_header(o);
          write_budget_curve_rows(o, res, ac.seed);
        });
        log << "train " << s << ": " << res.history.size() << " rounds, "
            << res.observations.size() << " observations, " << ledger.consumed() << "/"
            << *c.budget << " budget\n";
        if (res.exit_code != 0) {
          log << "train " << s << " stopped early: " << res.stop_reason << '\n';
          return res.exit_code;
        }
      }
    }
  }
  return 0;
}

std::size_t resolve_budget(double v, std::size_t grid) {
  if (v <= 1.0) return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(v * double(grid))));
  return static_cast<std::size_t>(std::llround(v));
}

int cmd_compare(const RunConfig& c, std::ostream& log) {
  std::ostringstream rows, rounds;
  rows << "dataset,llm,trial,budget,policy,seed,consumed,observations,ndcg10,ndcg50,"
          "simple_regret,exit_code\n";
  rounds << "dataset,llm,trial,budget,policy,seed,round,consumed,ndcg10,ndcg50,simple_regret\n";
  // (budget, policy) -> sums for the summary table.
  std::map<std::pair<std::size_t, std::string>, std::array<double, 3>> sums;
  int code = 0;
  auto flush = [&] {
    write_file(c.out / "compare" / "budget_curve.csv", [&](std::ostream& o) { o << rows.str(); });
    write_file(c.out / "compare" / "rounds.csv", [&](std::ostream& o) { o << rounds.str(); });
    write_file(c.out / "compare" / "summary.md", [&](std::ostream& o) {
      o << "| Budget | Policy | Runs | nDCG@10 | Simple regret |\n|---:|---|---:|---:|---:|\n";
      for (const auto& [key, s] : sums) {
        char line[160];
        std::snprintf(line, sizeof line, "| %zu | %s | %.0f | %.4f | %.4f |\n", key.first,
                      key.second.c_str(), s[0], s[1] / s[0], s[2] / s[0]);
        o << line;
      }
    });
  };

  for (const auto& d : c.datasets) {
    const auto ctx = load_context(c, d);
    for (const auto& l : c.llms) {
      const auto backend = make_backend(l, *ctx);
      fs::create_directories(c.out / "cache");
      DpoCache cache(cache_path(c, d.name, l.name));
      for (std::size_t t = 0; t < c.trials; ++t) {
        const SplitPlan split = make_split(*ctx->records, c.trial_seed(t), c.subsample);
        const AcquisitionProblem problem =
            make_acquisition_problem(split, ctx->queries, ctx->docs, c.max_train_queries);
        const DpoRelevanceSet held_out = held_out_set(c, *backend, *ctx, split, cache);
        const ValidationSet validation{split.sampled_test_queries, split.sampled_documents,
                                       &held_out};
        const std::size_t grid = problem.grid().size();

        std::vector<std::size_t> budgets;
        if (c.budget_on_cli) {
          budgets.push_back(*c.budget);
        } else {
          for (double v : c.compare.budgets) budgets.push_back(resolve_budget(v, grid));
        }
        for (std::size_t b : budgets) {
          if (b < c.acquisition.docs_per_query) {
            throw ConfigError("compare: budget " + std::to_string(b) +
                              " cannot fund one seed-round query of " +
                              std::to_string(c.acquisition.docs_per_query) + " docs");
          }
        }

        for (std::size_t b : budgets) {
          for (std::size_t seed = 0; seed < c.compare.seeds; ++seed) {
            for (auto policy : {AcquisitionPolicy::kRlraif, AcquisitionPolicy::kRandom}) {
              BudgetLedger ledger(b);
              AcquisitionContext actx;
              actx.backend = backend.get();
              actx.records = ctx->index.get();
              actx.cache = &cache;
              actx.ledger = &ledger;
              actx.dataset_id = d.name;
              actx.rbar_policy = c.rbar_policy;
              actx.retry = c.retry;
              actx.validation = c.compare.track_rounds ? &validation : nullptr;
              AcquisitionConfig ac = c.acquisition;
              ac.policy = policy;
              ac.seed = derive_seed(c.seed, "compare/" + std::to_string(seed));
              const AcquisitionResult res = run_acquisition(problem, actx, ac);
              RankingQuality q;
              if (!res.model.members.empty()) {
                const AdapterRetriever model("acquired", res.model, ctx->queries, ctx->docs);
                q = evaluate_retriever(model, held_out, validation.queries, validation.documents);
              }
              const std::string pname(to_string(policy));
              const std::string prefix = d.name + "," + l.name + "," + std::to_string(t) + "," +
                                         std::to_string(b) + "," + pname + "," +
                                         std::to_string(seed) + ",";
              rows << prefix << ledger.consumed() << ',' << res.observations.size() << ','
                   << fmt(q.ndcg10) << ',' << fmt(q.ndcg50) << ',' << fmt(q.simple_regret) << ','
                   << res.exit_code << '\n';
              for (const auto& r : res.history) {
                rounds << prefix << r.round << ',' << r.consumed << ','
                       << (r.ndcg10 ? fmt(*r.ndcg10) : "") << ','
                       << (r.ndcg50 ? fmt(*r.ndcg50) : "") << ','
                       << (r.simple_regret ? fmt(*r.simple_regret) : "") << '\n';
              }
              auto& s = sums[{b, pname}];
              s[0] += 1;
              s[1] += q.ndcg10;
              s[2] += q.simple_regret;
              log << "compare " << stem(d.name, l.name, t) << " B=" << b << " " << pname
                  << " seed " << seed << ": nDCG@10 " << fixed4(q.ndcg10) << ", regret "
                  << fixed4(q.simple_regret) << '\n';
              if (res.exit_code != 0) {
                log << "compare stopped early: " << res.stop_reason << '\n';
                code = res.exit_code;
                flush();
                return code;
              }
            }
          }
        }
      }
    }
  }
  flush();
  return code;
}

int cmd_leaderboard(const RunConfig& c, std::ostream& log) {
  std::vector<fs::path> inputs = c.leaderboard_inputs;
  if (inputs.empty()) inputs.push_back(c.out / "cells.csv");
  std::vector<EvalCell> cells;
  for (const auto& p : inputs) {
    std::ifstream in(p);
    if (!in) throw DataError("missing evaluation cells " + p.string() + " (run evaluate first)");
    auto more = read_cells_csv(in);
    cells.insert(cells.end(), more.begin(), more.end());
  }
  write_reports(c, cells);
  log << "leaderboard: " << cells.size() << " cells from " << inputs.size() << " file(s)\n";
  return 0;
}

// Materializes each synthetic dataset as files a file-kind section can read.
int cmd_synth(const RunConfig& c, std::ostream& log) {
  for (const auto& d : c.datasets) {
    if (d.kind != DatasetKind::kSynthetic) continue;
    const auto ctx = load_context(c, d);
    const fs::path dir = c.out / "synth" / d.name;
    write_file(dir / "records.jsonl", [&](std::ostream& o) { write_dataset_jsonl(o, *ctx->records); });
    save_embeddings(dir / "query_embeddings.jsonl", *ctx->queries, EmbeddingFormat::kJsonlVectors);
    save_embeddings(dir / "doc_embeddings.jsonl", *ctx->docs, EmbeddingFormat::kJsonlVectors);
    write_file(dir / "lm_spec.json", [&](std::ostream& o) { o << to_json(*ctx->lm).dump(1) << '\n'; });
    write_file(dir / "dataset.ini", [&](std::ostream& o) {
      o << "[dataset." << d.name << "]\nkind = file\npath = records.jsonl\n"
        << "query_embeddings = query_embeddings.jsonl\ndoc_embeddings = doc_embeddings.jsonl\n\n"
        << "[llm." << d.name << "-lm]\nkind = synthetic\nspec = lm_spec.json\n";
    });
    log << "synth " << d.name << ": " << ctx->records->size() << " records in " << dir.string()
        << '\n';
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Benchmark retrievers by how much their documents help an LLM answer."};
  app.name("dpobench");
  app.require_subcommand(1);
  std::string config_path, out_dir, policy, backends;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  auto* o_config = app.add_option("--config", config_path, "run configuration (INI)");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_seed = app.add_option("--seed", seed, "root seed");
  auto* o_budget = app.add_option("--budget", budget, "DPO evaluation budget");
  auto* o_policy = app.add_option("--policy", policy, "acquisition policy: rlraif or random");
  auto* o_backend = app.add_option("--backend", backends, "comma-separated llm sections to use");
  o_config->required();

  using Command = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"score", "build DPO relevance sets", cmd_score},
      {"evaluate", "evaluate retrievers against relevance sets", cmd_evaluate},
      {"train", "train an adapter by budgeted acquisition", cmd_train},
      {"compare-acquisition", "acquisition policies across budgets and seeds", cmd_compare},
      {"leaderboard", "re-aggregate evaluation cells", cmd_leaderboard},
      {"synth", "write synthetic datasets as files", cmd_synth}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help, _] : commands) {
    subs[name] = app.add_subcommand(name, help)->fallthrough();
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    Overrides ov;
    if (*o_out) ov.out = out_dir;
    if (*o_seed) ov.seed = seed;
    if (*o_budget) ov.budget = budget;
    if (*o_policy) ov.policy = parse_acquisition_policy(policy);
    if (*o_backend) {
      std::stringstream ss(backends);
      for (std::string b; std::getline(ss, b, ',');) {
        if (!b.empty()) ov.backends.push_back(b);
      }
    }
    const RunConfig config = load_run_config(config_path, ov);
    for (const auto& [name, _, fn] : commands) {
      if (!subs[name]->parsed()) continue;
      RunLock lock(config.out);
      write_resolved(config, name);
      return fn(config, out);
    }
    return 1;
  } catch (const RelevanceBuildError& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const BudgetExhausted& e) {
    err << "budget exhausted: " << e.what() << '\n';
    return 3;
  } catch (const BackendError& e) {
    err << "backend failure: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dpobench::cli
