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

#include "dpobench/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "csv.hpp"
#include "dpobench/errors.hpp"
#include "dpobench/rng.hpp"

namespace dpobench {
namespace {

using nlohmann::json;

std::string row_prefix(std::size_t row) {
  return "row " + std::to_string(row) + ": ";
}

std::string id_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw DataError("field 'id' must be a string or an integer");
}

McqRecord record_from_json(const json& row) {
  McqRecord rec;
  rec.id = id_to_string(row.at("id"));
  rec.question = row.at("question").get<std::string>();
  rec.answer = row.at("answer").get<std::string>();
  rec.incorrect_answers =
      row.at("incorrect_answers").get<std::vector<std::string>>();
  return rec;
}

std::vector<std::string> split_semicolons(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ';')) {
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::vector<McqRecord> parse_jsonl(std::istream& in) {
  std::vector<McqRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) continue;
    try {
      McqRecord rec = record_from_json(json::parse(line));
      validate_record(rec);
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw DataError(row_prefix(row) + e.what());
    } catch (const DataError& e) {
      throw DataError(row_prefix(row) + e.what());
    }
  }
  return records;
}

std::vector<McqRecord> parse_csv(std::istream& in) {
  auto header = read_csv_row(in);
  if (!header) return {};
  auto column = [&](const char* name) -> std::size_t {
    auto it = std::find(header->begin(), header->end(), name);
    if (it == header->end()) {
      throw DataError(std::string("csv header lacks column '") + name + "'");
    }
    return static_cast<std::size_t>(it - header->begin());
  };
  const std::size_t c_id = column("id");
  const std::size_t c_q = column("question");
  const std::size_t c_a = column("answer");
  const std::size_t c_inc = column("incorrect_answers");
  const std::size_t width = header->size();

  std::vector<McqRecord> records;
  std::size_t row = 1;
  while (true) {
    std::optional<std::vector<std::string>> fields;
    ++row;
    try {
      fields = read_csv_row(in);
    } catch (const DataError& e) {
      throw DataError(row_prefix(row) + e.what());
    }
    if (!fields) break;
    if (fields->size() == 1 && blank(fields->front())) continue;
    if (fields->size() != width) {
      throw DataError(row_prefix(row) + "expected " + std::to_string(width) +
                      " fields, got " + std::to_string(fields->size()));
    }
    McqRecord rec{(*fields)[c_id], (*fields)[c_q], (*fields)[c_a],
                  split_semicolons((*fields)[c_inc])};
    try {
      validate_record(rec);
    } catch (const DataError& e) {
      throw DataError(row_prefix(row) + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "jsonl") return DatasetFormat::kJsonl;
  if (name == "csv") return DatasetFormat::kCsv;
  throw ConfigError("unknown dataset format '" + std::string(name) + "'");
}

DatasetFormat dataset_format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::kCsv
                                    : DatasetFormat::kJsonl;
}

void validate_record(const McqRecord& rec) {
  if (rec.id.empty()) throw DataError("empty record id");
  if (rec.question.empty()) throw DataError("record " + rec.id + ": empty question");
  if (rec.incorrect_answers.empty()) {
    throw DataError("record " + rec.id + ": no incorrect answers");
  }
  if (std::find(rec.incorrect_answers.begin(), rec.incorrect_answers.end(),
                rec.answer) != rec.incorrect_answers.end()) {
    throw DataError("record " + rec.id +
                    ": incorrect_answers contains the correct answer");
  }
}

std::vector<McqRecord> parse_dataset(std::istream& in, DatasetFormat format) {
  std::vector<McqRecord> records =
      format == DatasetFormat::kJsonl ? parse_jsonl(in) : parse_csv(in);
  if (records.empty()) throw DataError("empty dataset");
  std::unordered_set<std::string> seen;
  for (const auto& rec : records) {
    if (!seen.insert(rec.id).second) {
      throw DataError("duplicate record id '" + rec.id + "'");
    }
  }
  return records;
}

std::vector<McqRecord> load_dataset(const std::filesystem::path& path,
                                    DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in, format);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<McqRecord> load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, dataset_format_from_path(path));
}

void write_dataset_jsonl(std::ostream& out, std::span<const McqRecord> records) {
  for (const auto& rec : records) {
    out << json{{"id", rec.id},
                {"question", rec.question},
                {"answer", rec.answer},
                {"incorrect_answers", rec.incorrect_answers}}
               .dump()
        << '\n';
  }
}

RecordIndex::RecordIndex(std::span<const McqRecord> records) {
  for (const auto& rec : records) by_id_.emplace(rec.id, &rec);
}

const McqRecord& RecordIndex::at(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("unknown record id '" + id + "'");
  return *it->second;
}

SplitPlan make_split(std::span<const McqRecord> records,
                     std::uint64_t trial_seed, SubsampleSize subsample) {
  const std::size_t n = records.size();
  if (n < 5) throw DataError("a split needs at least 5 records");
  const std::size_t n_train = n * 4 / 5;

  Rng rng(derive_seed(trial_seed, "split"));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);

  SplitPlan plan;
  plan.trial_seed = trial_seed;
  plan.subsample = subsample;
  for (std::size_t i = 0; i < n; ++i) {
    auto& side = i < n_train ? plan.train_query_ids : plan.test_query_ids;
    side.push_back(records[perm[i]].id);
  }
  plan.document_ids = plan.train_query_ids;

  if (subsample.n_queries > plan.test_query_ids.size()) {
    throw DataError("subsample of " + std::to_string(subsample.n_queries) +
                    " test queries exceeds the pool of " +
                    std::to_string(plan.test_query_ids.size()));
  }
  if (subsample.n_docs > plan.document_ids.size()) {
    throw DataError("subsample of " + std::to_string(subsample.n_docs) +
                    " documents exceeds the pool of " +
                    std::to_string(plan.document_ids.size()));
  }
  std::vector<std::string> queries = plan.test_query_ids;
  rng.shuffle(queries);
  queries.resize(subsample.n_queries);
  std::vector<std::string> docs = plan.document_ids;
  rng.shuffle(docs);
  docs.resize(subsample.n_docs);
  plan.sampled_test_queries = std::move(queries);
  plan.sampled_documents = std::move(docs);
  return plan;
}

void write_split_jsonl(std::ostream& out, const SplitPlan& plan) {
  out << json{{"trial_seed", plan.trial_seed},
              {"n_test_queries", plan.subsample.n_queries},
              {"n_test_docs", plan.subsample.n_docs}}
             .dump()
      << '\n';
  auto emit = [&](const char* role, const std::vector<std::string>& ids) {
    for (const auto& id : ids) {
      out << json{{"role", role}, {"id", id}}.dump() << '\n';
    }
  };
  emit("train", plan.train_query_ids);
  emit("test", plan.test_query_ids);
  emit("sampled_query", plan.sampled_test_queries);
  emit("sampled_document", plan.sampled_documents);
}

}  // namespace dpobench
