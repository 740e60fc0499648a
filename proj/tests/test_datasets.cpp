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

#include <set>
#include <sstream>

#include "dpobench/datasets.hpp"
#include "dpobench/errors.hpp"
#include "test_support.hpp"

namespace dpobench {
namespace {

using testing::data_path;
using testing::numbered_records;

TEST(LoadDataset, ReadsJsonlWithIntegerIdsAndBlankLines) {
  const auto recs = load_dataset(data_path("data/tiny.jsonl"));
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].incorrect_answers, (std::vector<std::string>{"5", "22"}));
  EXPECT_EQ(recs[1].id, "7");
  EXPECT_EQ(recs[2].answer, "100 C");
}

TEST(LoadDataset, CsvMatchesJsonl) {
  auto j = load_dataset(data_path("data/tiny.jsonl"));
  auto c = load_dataset(data_path("data/tiny.csv"));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], j[0]);
  EXPECT_EQ(c[1], j[1]);
  EXPECT_EQ(c[2].question, "Boiling point of water, at sea level?");
}

TEST(LoadDataset, EmptyInputFails) {
  std::istringstream in("\n\n");
  try {
    parse_dataset(in, DatasetFormat::kJsonl);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty dataset"), std::string::npos);
  }
}

TEST(LoadDataset, CorrectAnswerAmongIncorrectIsRowError) {
  std::istringstream in(
      R"({"id": "a", "question": "q", "answer": "x", "incorrect_answers": ["y"]})"
      "\n"
      R"({"id": "b", "question": "q", "answer": "x", "incorrect_answers": ["x", "y"]})"
      "\n");
  try {
    parse_dataset(in, DatasetFormat::kJsonl);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, RejectsDuplicatesMissingFieldsAndNoIncorrect) {
  std::istringstream dup(
      R"({"id": "a", "question": "q", "answer": "x", "incorrect_answers": ["y"]})"
      "\n"
      R"({"id": "a", "question": "r", "answer": "x", "incorrect_answers": ["y"]})");
  EXPECT_THROW(parse_dataset(dup, DatasetFormat::kJsonl), DataError);
  std::istringstream missing(R"({"id": "a", "question": "q", "incorrect_answers": ["y"]})");
  EXPECT_THROW(parse_dataset(missing, DatasetFormat::kJsonl), DataError);
  std::istringstream none(R"({"id": "a", "question": "q", "answer": "x", "incorrect_answers": []})");
  EXPECT_THROW(parse_dataset(none, DatasetFormat::kJsonl), DataError);
  std::istringstream bad("{not json");
  EXPECT_THROW(parse_dataset(bad, DatasetFormat::kJsonl), DataError);
  std::istringstream csv("id,question\n1,q\n");
  EXPECT_THROW(parse_dataset(csv, DatasetFormat::kCsv), DataError);
}

TEST(LoadDataset, RoundTripsThroughJsonl) {
  const auto recs = numbered_records(6);
  std::stringstream ss;
  write_dataset_jsonl(ss, recs);
  EXPECT_EQ(parse_dataset(ss, DatasetFormat::kJsonl), recs);
}

TEST(MakeSplit, HundredRecordsGiveEightyTwenty) {
  const auto recs = numbered_records(100);
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto p = make_split(recs, seed, {5, 10});
    EXPECT_EQ(p.train_query_ids.size(), 80u);
    EXPECT_EQ(p.test_query_ids.size(), 20u);
    EXPECT_EQ(p.pair_count(), 50u);
  }
}

TEST(MakeSplit, Deterministic) {
  const auto recs = numbered_records(30);
  EXPECT_EQ(make_split(recs, 11, {3, 4}), make_split(recs, 11, {3, 4}));
  EXPECT_NE(make_split(recs, 11, {3, 4}).train_query_ids,
            make_split(recs, 12, {3, 4}).train_query_ids);
}

TEST(MakeSplit, MatchesReplayedShuffle) {
  const auto p = make_split(numbered_records(10), 7, {2, 8});
  auto same = [](const std::vector<std::string>& got, const auto& want) {
    return std::equal(got.begin(), got.end(), want.begin(), want.end());
  };
  EXPECT_TRUE(same(p.train_query_ids, oracle::kSplitTrain));
  EXPECT_TRUE(same(p.test_query_ids, oracle::kSplitTest));
  EXPECT_TRUE(same(p.sampled_test_queries, oracle::kSplitQueries));
  EXPECT_TRUE(same(p.sampled_documents, oracle::kSplitDocs));
}

TEST(MakeSplit, Errors) {
  EXPECT_THROW(make_split(numbered_records(4), 0, {0, 0}), DataError);
  EXPECT_THROW(make_split(numbered_records(10), 0, {3, 1}), DataError);
  EXPECT_THROW(make_split(numbered_records(10), 0, {1, 9}), DataError);
}

TEST(MakeSplit, InvariantsAcrossSeedsAndSizes) {
  for (std::size_t n = 5; n < 60; n += 7) {
    const auto recs = numbered_records(n);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = make_split(recs, seed, {1, 2});
      std::set<std::string> train(p.train_query_ids.begin(), p.train_query_ids.end());
      std::set<std::string> test(p.test_query_ids.begin(), p.test_query_ids.end());
      EXPECT_EQ(train.size() + test.size(), n);
      for (const auto& t : test) EXPECT_FALSE(train.count(t));
      EXPECT_EQ(p.document_ids, p.train_query_ids);
      for (const auto& q : p.sampled_test_queries) EXPECT_TRUE(test.count(q));
      for (const auto& d : p.sampled_documents) EXPECT_TRUE(train.count(d));
    }
  }
}

TEST(WriteSplit, OneLinePerIdPlusHeader) {
  const auto p = make_split(numbered_records(10), 3, {2, 3});
  std::stringstream ss;
  write_split_jsonl(ss, p);
  std::size_t lines = 0;
  for (std::string l; std::getline(ss, l);) ++lines;
  EXPECT_EQ(lines, 1 + 8 + 2 + 2 + 3);
}

}  // namespace
}  // namespace dpobench
