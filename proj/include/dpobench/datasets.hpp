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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dpobench {

// A multiple-choice question. Every record is both a potential query and a
// potential demonstration document.
struct McqRecord {
  std::string id;
  std::string question;
  std::string answer;
  std::vector<std::string> incorrect_answers;

  bool operator==(const McqRecord&) const = default;
};

enum class DatasetFormat { kJsonl, kCsv };

DatasetFormat parse_dataset_format(std::string_view name);
// ".csv" maps to kCsv, everything else to kJsonl.
DatasetFormat dataset_format_from_path(const std::filesystem::path& path);

// Throws DataError when a record breaks an McqRecord invariant.
void validate_record(const McqRecord& record);

// JSONL rows: {"id", "question", "answer", "incorrect_answers": [...]}.
// CSV: header naming id, question, answer, incorrect_answers; the incorrect
// answers are ';'-joined within one field. Errors carry the 1-based row.
std::vector<McqRecord> parse_dataset(std::istream& in, DatasetFormat format);
std::vector<McqRecord> load_dataset(const std::filesystem::path& path,
                                    DatasetFormat format);
std::vector<McqRecord> load_dataset(const std::filesystem::path& path);

void write_dataset_jsonl(std::ostream& out, std::span<const McqRecord> records);

// Id -> record lookup over a loaded dataset. Does not own the records.
class RecordIndex {
 public:
  explicit RecordIndex(std::span<const McqRecord> records);
  const McqRecord& at(const std::string& id) const;
  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
  std::size_t size() const { return by_id_.size(); }

 private:
  std::unordered_map<std::string, const McqRecord*> by_id_;
};

struct SubsampleSize {
  std::size_t n_queries = 0;
  std::size_t n_docs = 0;
  bool operator==(const SubsampleSize&) const = default;
};

// One trial of the cold-start-query / warm-start-document protocol. Ids keep
// the order in which the seeded shuffles produced them.
struct SplitPlan {
  std::uint64_t trial_seed = 0;
  std::vector<std::string> train_query_ids;
  std::vector<std::string> test_query_ids;
  // Candidate demonstrations: exactly the train records.
  std::vector<std::string> document_ids;
  SubsampleSize subsample;
  std::vector<std::string> sampled_test_queries;
  std::vector<std::string> sampled_documents;

  std::size_t pair_count() const {
    return sampled_test_queries.size() * sampled_documents.size();
  }
  bool operator==(const SplitPlan&) const = default;
};

inline constexpr double kTrainFraction = 0.8;

// Train size is floor(0.8 * N). Deterministic in (records, seed, subsample).
SplitPlan make_split(std::span<const McqRecord> records,
                     std::uint64_t trial_seed, SubsampleSize subsample);

// Audit dump: one JSON object per line, tagged with its role.
void write_split_jsonl(std::ostream& out, const SplitPlan& plan);

}  // namespace dpobench
