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

#include "dpobench/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "csv.hpp"
#include "dpobench/errors.hpp"

namespace dpobench {
namespace {

Eigen::VectorXd ranked_values(const RetrieverRanking& ranking, const RelevanceMap& relevance) {
  Eigen::VectorXd values(static_cast<Eigen::Index>(ranking.ranked_doc_ids.size()));
  for (std::size_t j = 0; j < ranking.ranked_doc_ids.size(); ++j) {
    auto it = relevance.find(ranking.ranked_doc_ids[j]);
    if (it == relevance.end()) {
      throw DataError("no DPO value for doc " + ranking.ranked_doc_ids[j] + " of query " +
                      ranking.query_id);
    }
    values(static_cast<Eigen::Index>(j)) = it->second;
  }
  return values;
}

void check_k(std::size_t k) {
  if (k == 0) throw DataError("k must be at least 1");
}

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct Accum {
  double s10 = 0.0;
  double s50 = 0.0;
  std::size_t n = 0;
  void add(const EvalCell& c) {
    s10 += c.ndcg10;
    s50 += c.ndcg50;
    ++n;
  }
  MetricMeans mean() const {
    return {s10 / static_cast<double>(n), s50 / static_cast<double>(n), n};
  }
};

}  // namespace

double dcg_at_k(const RetrieverRanking& ranking, const RelevanceMap& relevance, std::size_t k) {
  check_k(k);
  return dcg_of_ranked(ranked_values(ranking, relevance), k);
}

double idcg_at_k(const RetrieverRanking& ranking, const RelevanceMap& relevance, std::size_t k) {
  check_k(k);
  RetrieverRanking ideal = ranking;
  std::stable_sort(ideal.ranked_doc_ids.begin(), ideal.ranked_doc_ids.end(),
                   [&](const std::string& a, const std::string& b) {
                     const double ra = relevance.at(a);
                     const double rb = relevance.at(b);
                     return ra != rb ? ra > rb : a < b;
                   });
  return dcg_at_k(ideal, relevance, k);
}

double ndcg_at_k(const RetrieverRanking& ranking, const RelevanceMap& relevance, std::size_t k) {
  if (ranking.ranked_doc_ids.empty()) {
    throw DataError("nDCG of an empty ranking for query " + ranking.query_id);
  }
  const double dcg = dcg_at_k(ranking, relevance, k);
  return dcg / idcg_at_k(ranking, relevance, k);
}

double simple_regret(const RetrieverRanking& ranking, const RelevanceMap& relevance) {
  if (ranking.ranked_doc_ids.empty()) {
    throw DataError("regret of an empty ranking for query " + ranking.query_id);
  }
  const Eigen::VectorXd values = ranked_values(ranking, relevance);
  return values.maxCoeff() - values(0);
}

EvalReport aggregate(std::span<const EvalCell> cells) {
  if (cells.empty()) throw DataError("no evaluation cells to aggregate");
  EvalReport report;
  report.cells.assign(cells.begin(), cells.end());

  std::set<CellKey> all_keys;
  std::map<std::string, std::set<CellKey>> keys_by_model;
  std::map<std::string, ModelSummary> summaries;
  std::map<std::string, Accum> overall;
  std::map<std::string, std::map<std::string, Accum>> by_dataset, by_llm;
  for (const auto& c : cells) {
    const CellKey key{c.dataset_id, c.llm_id, c.trial_seed};
    all_keys.insert(key);
    if (!keys_by_model[c.model_id].insert(key).second) {
      throw DataError("duplicate cell for model " + c.model_id);
    }
    auto& s = summaries[c.model_id];
    s.model_id = c.model_id;
    s.organization = c.organization;
    overall[c.model_id].add(c);
    by_dataset[c.model_id][c.dataset_id].add(c);
    by_llm[c.model_id][c.llm_id].add(c);
  }
  for (auto& [id, s] : summaries) {
    s.overall = overall[id].mean();
    for (const auto& [ds, acc] : by_dataset[id]) s.per_dataset[ds] = acc.mean();
    for (const auto& [llm, acc] : by_llm[id]) s.per_llm[llm] = acc.mean();
    const auto& mine = keys_by_model[id];
    std::set_difference(all_keys.begin(), all_keys.end(), mine.begin(), mine.end(),
                        std::back_inserter(s.missing_cells));
    report.models.push_back(std::move(s));
  }
  std::stable_sort(report.models.begin(), report.models.end(),
                   [](const ModelSummary& a, const ModelSummary& b) {
                     if (a.overall.ndcg10 != b.overall.ndcg10) {
                       return a.overall.ndcg10 > b.overall.ndcg10;
                     }
                     if (a.overall.ndcg50 != b.overall.ndcg50) {
                       return a.overall.ndcg50 > b.overall.ndcg50;
                     }
                     return a.model_id < b.model_id;
                   });
  return report;
}

void write_cells_csv(std::ostream& out, std::span<const EvalCell> cells) {
  out << "model_id,organization,dataset_id,llm_id,trial_seed,ndcg10,ndcg50,simple_regret,"
         "n_queries\n";
  for (const auto& c : cells) {
    out << csv_field(c.model_id) << ',' << csv_field(c.organization) << ','
        << csv_field(c.dataset_id) << ',' << csv_field(c.llm_id) << ',' << c.trial_seed << ','
        << fmt(c.ndcg10) << ',' << fmt(c.ndcg50) << ',' << fmt(c.simple_regret) << ','
        << c.n_queries << '\n';
  }
}

std::vector<EvalCell> read_cells_csv(std::istream& in) {
  auto header = read_csv_row(in);
  if (!header || header->size() != 9 || (*header)[0] != "model_id") {
    throw DataError("cells csv: unexpected header");
  }
  std::vector<EvalCell> cells;
  std::size_t row = 1;
  while (auto fields = read_csv_row(in)) {
    ++row;
    if (fields->size() == 1 && fields->front().empty()) continue;
    if (fields->size() != 9) {
      throw DataError("cells csv: row " + std::to_string(row) + " has " +
                      std::to_string(fields->size()) + " fields");
    }
    const auto& f = *fields;
    try {
      cells.push_back({f[0], f[1], f[2], f[3], std::stoull(f[4]), std::stod(f[5]),
                       std::stod(f[6]), std::stod(f[7]), std::stoull(f[8])});
    } catch (const std::logic_error&) {
      throw DataError("cells csv: bad number on row " + std::to_string(row));
    }
  }
  return cells;
}

void write_leaderboard_csv(std::ostream& out, const EvalReport& report) {
  out << "rank,organization,model,ndcg10,ndcg50,cells,missing_cells\n";
  std::size_t rank = 0;
  for (const auto& m : report.models) {
    out << ++rank << ',' << csv_field(m.organization) << ',' << csv_field(m.model_id) << ','
        << fmt(m.overall.ndcg10) << ',' << fmt(m.overall.ndcg50) << ',' << m.overall.cells
        << ',' << m.missing_cells.size() << '\n';
  }
}

void write_leaderboard_markdown(std::ostream& out, const EvalReport& report) {
  out << "| Organization | Model | nDCG@10 | nDCG@50 |\n";
  out << "|---|---|---:|---:|\n";
  for (const auto& m : report.models) {
    out << "| " << m.organization << " | `" << m.model_id << "` | "
        << fmt(m.overall.ndcg10, "%.4f") << " | " << fmt(m.overall.ndcg50, "%.4f") << " |";
    if (!m.missing_cells.empty()) out << " (" << m.missing_cells.size() << " cells missing)";
    out << '\n';
  }
}

void write_breakdown_markdown(std::ostream& out, const EvalReport& report) {
  auto table = [&](const char* title, auto member) {
    std::set<std::string> columns;
    for (const auto& m : report.models) {
      for (const auto& [name, _] : m.*member) columns.insert(name);
    }
    out << "### " << title << "\n\n| Model |";
    for (const auto& c : columns) out << ' ' << c << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& m : report.models) {
      out << "| `" << m.model_id << "` |";
      for (const auto& c : columns) {
        auto it = (m.*member).find(c);
        out << ' ' << (it == (m.*member).end() ? std::string("n/a")
                                               : fmt(it->second.ndcg10, "%.4f"))
            << " |";
      }
      out << '\n';
    }
    out << '\n';
  };
  table("nDCG@10 per dataset", &ModelSummary::per_dataset);
  table("nDCG@10 per LLM", &ModelSummary::per_llm);
}

}  // namespace dpobench
