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

#include "dpobench/dpo.hpp"

#include <atomic>
#include <exception>
#include <iomanip>
#include <set>
#include <thread>

#include <json.hpp>

#include "dpobench/errors.hpp"
#include "dpobench/rng.hpp"

namespace dpobench {
namespace {

using nlohmann::json;

json score_to_json(const DpoScore& s) {
  return json{{"query_id", s.query_id},
              {"doc_id", s.doc_id},
              {"llm_id", s.llm_id},
              {"value", s.value},
              {"logp_r_base", s.components.logp_r_base},
              {"logp_r_ctx", s.components.logp_r_ctx},
              {"logp_rbar_base", s.components.logp_rbar_base},
              {"logp_rbar_ctx", s.components.logp_rbar_ctx}};
}

DpoScore score_from_json(const json& j) {
  DpoScore s;
  s.query_id = j.at("query_id").get<std::string>();
  s.doc_id = j.at("doc_id").get<std::string>();
  s.llm_id = j.at("llm_id").get<std::string>();
  s.value = j.at("value").get<double>();
  s.components.logp_r_base = j.at("logp_r_base").get<double>();
  s.components.logp_r_ctx = j.at("logp_r_ctx").get<double>();
  s.components.logp_rbar_base = j.at("logp_rbar_base").get<double>();
  s.components.logp_rbar_ctx = j.at("logp_rbar_ctx").get<double>();
  return s;
}

struct ResponseLogprobs {
  double base = 0.0;
  double ctx = 0.0;
};

ResponseLogprobs score_pair(const LogprobBackend& backend, const McqRecord& query,
                            const McqRecord& doc, const std::string& response,
                            const RetryPolicy& retry) {
  PromptParts base{std::nullopt, query.question, response};
  PromptParts ctx{Demonstration{doc.question, doc.answer}, query.question, response};
  return {score_response(backend, base, retry).total_logprob,
          score_response(backend, ctx, retry).total_logprob};
}

}  // namespace

RbarPolicy parse_rbar_policy(std::string_view name) {
  if (name == "first") return RbarPolicy::kFirst;
  if (name == "mean-logit") return RbarPolicy::kMeanLogit;
  throw ConfigError("unknown rbar policy '" + std::string(name) + "'");
}

std::string_view to_string(RbarPolicy policy) {
  return policy == RbarPolicy::kFirst ? "first" : "mean-logit";
}

double dpo_value(const DpoComponents& c) {
  const double x = c.inner_logit();
  if (!std::isfinite(x)) throw DataError("non-finite DPO logit");
  const double v = log_sigmoid(x);
  return v < 0 ? v : std::nextafter(0.0, -1.0);
}

DpoScore compute_dpo(const LogprobBackend& backend, const McqRecord& query, const McqRecord& doc,
                     RbarPolicy policy, const RetryPolicy& retry) {
  if (query.incorrect_answers.empty()) {
    throw DataError("query " + query.id + " has no incorrect answer");
  }
  DpoScore score;
  score.query_id = query.id;
  score.doc_id = doc.id;
  score.llm_id = backend.id();

  const ResponseLogprobs r = score_pair(backend, query, doc, query.answer, retry);
  score.components.logp_r_base = r.base;
  score.components.logp_r_ctx = r.ctx;

  const std::size_t n_rbar = policy == RbarPolicy::kFirst ? 1 : query.incorrect_answers.size();
  double rbar_base = 0.0;
  double rbar_ctx = 0.0;
  for (std::size_t i = 0; i < n_rbar; ++i) {
    const ResponseLogprobs rb =
        score_pair(backend, query, doc, query.incorrect_answers[i], retry);
    rbar_base += rb.base;
    rbar_ctx += rb.ctx;
  }
  score.components.logp_rbar_base = rbar_base / static_cast<double>(n_rbar);
  score.components.logp_rbar_ctx = rbar_ctx / static_cast<double>(n_rbar);

  for (double v : {score.components.logp_r_base, score.components.logp_r_ctx,
                   score.components.logp_rbar_base, score.components.logp_rbar_ctx}) {
    if (!std::isfinite(v)) {
      throw DataError("degenerate logprob for pair " + query.id + "/" + doc.id);
    }
  }
  score.value = dpo_value(score.components);
  return score;
}

std::size_t DpoCacheKeyHash::operator()(const DpoCacheKey& k) const {
  std::uint64_t h = fnv1a64(k.llm_id);
  for (const std::string* part : {&k.template_version, &k.query_id, &k.doc_id}) {
    h = fnv1a64("\x1f", h);
    h = fnv1a64(*part, h);
  }
  return static_cast<std::size_t>(splitmix64(h ^ static_cast<std::uint64_t>(k.policy)));
}

DpoCache::DpoCache(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        DpoCacheKey key{j.at("llm_id").get<std::string>(),
                        j.at("template_version").get<std::string>(),
                        j.at("query_id").get<std::string>(), j.at("doc_id").get<std::string>(),
                        parse_rbar_policy(j.at("rbar_policy").get<std::string>())};
        entries_.insert_or_assign(std::move(key), score_from_json(j));
      } catch (const json::exception&) {
        // A torn final line from an interrupted append; later lines rewrite it.
        if (in.peek() != std::char_traits<char>::eof()) {
          throw DataError(path.string() + ": corrupt cache line " + std::to_string(row));
        }
      }
    }
  } else if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  file_.emplace(path, std::ios::app);
  if (!*file_) throw DataError("cannot open DPO cache " + path.string());
}

std::optional<DpoScore> DpoCache::find(const DpoCacheKey& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void DpoCache::put(const DpoCacheKey& key, const DpoScore& score) {
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(key, score);
  if (file_) {
    json j = score_to_json(score);
    j["template_version"] = key.template_version;
    j["rbar_policy"] = std::string(to_string(key.policy));
    j["llm_id"] = key.llm_id;
    *file_ << j.dump() << '\n';
    file_->flush();
  }
}

std::size_t DpoCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<std::string> DpoRelevanceSet::query_ids() const {
  std::set<std::string> ids;
  for (const auto& [key, _] : entries) ids.insert(key.first);
  return {ids.begin(), ids.end()};
}

std::unordered_map<std::string, double> DpoRelevanceSet::relevance_for(
    const std::string& query_id) const {
  std::unordered_map<std::string, double> out;
  for (auto it = entries.lower_bound({query_id, std::string()});
       it != entries.end() && it->first.first == query_id; ++it) {
    out.emplace(it->first.second, it->second.value);
  }
  return out;
}

DpoRelevanceSet build_relevance_set(const LogprobBackend& backend, const RecordIndex& records,
                                    const SplitPlan& split, DpoCache& cache,
                                    const RelevanceBuildOptions& options) {
  std::vector<QueryDocPair> pairs;
  pairs.reserve(split.pair_count());
  for (const auto& q : split.sampled_test_queries) {
    for (const auto& d : split.sampled_documents) pairs.emplace_back(q, d);
  }
  return build_relevance_set(backend, records, pairs, cache, options, split.trial_seed);
}

DpoRelevanceSet build_relevance_set(const LogprobBackend& backend, const RecordIndex& records,
                                    const std::vector<QueryDocPair>& pairs, DpoCache& cache,
                                    const RelevanceBuildOptions& options,
                                    std::uint64_t trial_seed) {
  DpoRelevanceSet set;
  set.dataset_id = options.dataset_id;
  set.llm_id = backend.id();
  set.trial_seed = trial_seed;
  set.policy = options.policy;

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;

  auto work = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      const auto& pair = pairs[i];
      const DpoCacheKey key{backend.id(), std::string(kTemplateVersion), pair.first, pair.second,
                            options.policy};
      try {
        std::optional<DpoScore> score = cache.find(key);
        if (score && options.charge_cache_hits && options.ledger &&
            options.ledger->reserve(pair)) {
          options.ledger->commit(pair);
        }
        if (!score) {
          const bool reserved = options.ledger && options.ledger->reserve(pair);
          try {
            score = compute_dpo(backend, records.at(pair.first), records.at(pair.second),
                                options.policy, options.retry);
          } catch (...) {
            if (reserved) options.ledger->release(pair);
            throw;
          }
          cache.put(key, *score);
          if (reserved) options.ledger->commit(pair);
        }
        std::lock_guard lock(mu);
        set.entries.insert_or_assign(pair, std::move(*score));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop.store(true);
      }
    }
  };

  const unsigned n_workers = std::max(1u, options.workers);
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }

  if (failure) {
    const std::size_t done = set.entries.size();
    try {
      std::rethrow_exception(failure);
    } catch (const BudgetExhausted& e) {
      throw RelevanceBuildError(std::string("relevance set incomplete: ") + e.what(), done, 3);
    } catch (const BackendError& e) {
      throw RelevanceBuildError(std::string("relevance set incomplete: ") + e.what(), done, 2);
    }
  }
  return set;
}

void write_relevance_jsonl(std::ostream& out, const DpoRelevanceSet& set) {
  out << json{{"dataset_id", set.dataset_id},
              {"llm_id", set.llm_id},
              {"trial_seed", set.trial_seed},
              {"rbar_policy", std::string(to_string(set.policy))},
              {"template_version", std::string(kTemplateVersion)},
              {"pairs", set.entries.size()}}
             .dump()
      << '\n';
  for (const auto& [key, score] : set.entries) out << score_to_json(score).dump() << '\n';
}

DpoRelevanceSet read_relevance_jsonl(std::istream& in) {
  DpoRelevanceSet set;
  std::string line;
  if (!std::getline(in, line)) throw DataError("relevance set: missing header");
  try {
    const json header = json::parse(line);
    set.dataset_id = header.at("dataset_id").get<std::string>();
    set.llm_id = header.at("llm_id").get<std::string>();
    set.trial_seed = header.at("trial_seed").get<std::uint64_t>();
    set.policy = parse_rbar_policy(header.at("rbar_policy").get<std::string>());
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      DpoScore s = score_from_json(json::parse(line));
      QueryDocPair key{s.query_id, s.doc_id};
      if (!set.entries.emplace(std::move(key), std::move(s)).second) {
        throw DataError("relevance set: duplicate pair on line " + std::to_string(row));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("relevance set: ") + e.what());
  }
  return set;
}

void write_relevance_csv_matrix(std::ostream& out, const DpoRelevanceSet& set) {
  std::set<std::string> docs;
  for (const auto& [key, _] : set.entries) docs.insert(key.second);
  out << "query_id";
  for (const auto& d : docs) out << ',' << d;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& q : set.query_ids()) {
    const auto rel = set.relevance_for(q);
    out << q;
    for (const auto& d : docs) {
      out << ',';
      if (auto it = rel.find(d); it != rel.end()) out << it->second;
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace dpobench
