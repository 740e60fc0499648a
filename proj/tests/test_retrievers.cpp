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
#include <fstream>
#include <random>

#include "dpobench/errors.hpp"
#include "dpobench/retrievers.hpp"
#include "test_support.hpp"

namespace dpobench {
namespace {

using testing::TempDir;

std::shared_ptr<const EmbeddingStore> store_of(std::vector<std::vector<float>> rows,
                                               bool normalize = true) {
  EmbeddingMatrix m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXf>(rows[i].data(), m.cols());
    ids.push_back("d" + std::to_string(i));
  }
  EmbeddingStore raw("emb", ids, m);
  return std::make_shared<const EmbeddingStore>(normalize ? raw.normalized_copy() : raw);
}

TEST(Cosine, KnownValueAndScaleInvariance) {
  Eigen::Vector3d a(1, 2, 2), b(2, 1, 2);
  EXPECT_NEAR(cosine_relevance(a, b), oracle::kCosine122_212, 1e-15);
  EXPECT_NEAR(cosine_relevance(a * 7.5, b * 0.01), oracle::kCosine122_212, 1e-15);
  EXPECT_NEAR(cosine_relevance(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosine_relevance(a, -a), -1.0, 1e-15);
  EXPECT_THROW(cosine_relevance(a, Eigen::VectorXd::Ones(2)), DataError);
  EXPECT_THROW(cosine_relevance(a, Eigen::Vector3d::Zero()), DataError);
}

TEST(CosineRetriever, RankingMatchesBruteForce) {
  std::mt19937 gen(11);
  std::normal_distribution<float> nd;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<float>> rows(6, std::vector<float>(4));
    for (auto& r : rows) std::generate(r.begin(), r.end(), [&] { return nd(gen); });
    auto store = store_of(rows);
    CosineRetriever ret("cos", store, store);
    std::vector<std::string> pool{"d1", "d2", "d3", "d4", "d5"};
    const auto ranked = rank_documents(ret, "d0", pool);
    auto expect = pool;
    const auto q = store->row("d0");
    std::stable_sort(expect.begin(), expect.end(), [&](const auto& x, const auto& y) {
      return cosine_relevance(q, store->row(x)) > cosine_relevance(q, store->row(y));
    });
    EXPECT_EQ(ranked.ranked_doc_ids, expect);
    EXPECT_EQ(ranked.query_id, "d0");
  }
}

TEST(RankByScores, TiesBreakByDocId) {
  std::vector<std::string> pool{"c", "a", "b"};
  std::vector<double> scores{1.0, 0.5, 1.0};
  EXPECT_EQ(rank_by_scores("q", pool, scores).ranked_doc_ids,
            (std::vector<std::string>{"b", "c", "a"}));
  std::vector<double> short_scores{1.0};
  EXPECT_THROW(rank_by_scores("q", pool, short_scores), DataError);
}

TEST(EmbeddingStore, ValidatesInput) {
  EmbeddingMatrix m(2, 2);
  m << 1, 0, 0, 2;
  EXPECT_THROW(EmbeddingStore("e", {"a", "a"}, m), DataError);
  EXPECT_THROW(EmbeddingStore("e", {"a"}, m), DataError);
  EXPECT_THROW(EmbeddingStore("e", {"a", "b"}, m, true), DataError);
  EmbeddingStore ok("e", {"a", "b"}, m.rowwise().normalized(), true);
  EXPECT_TRUE(ok.normalized());
  m(0, 0) = NAN;
  EXPECT_THROW(EmbeddingStore("e", {"a", "b"}, m), DataError);
  EXPECT_THROW(ok.index_of("zz"), DataError);
}

TEST(EmbeddingStore, RoundTripsBothFormats) {
  TempDir dir("emb");
  auto store = store_of({{1, 2, 3}, {-0.5f, 0.25f, 4}, {0, 0, 1e-3f}});
  for (const char* name : {"e.jsonl", "e.bin"}) {
    const auto path = dir / name;
    const auto fmt = embedding_format_from_path(path);
    save_embeddings(path, *store, fmt);
    const auto back = load_embeddings(path);
    EXPECT_EQ(back.ids(), store->ids()) << name;
    EXPECT_EQ(back.vectors(), store->vectors()) << name;
  }
  // Only the JSONL header carries the model id and the normalized flag.
  EXPECT_EQ(load_embeddings(dir / "e.jsonl"), *store);
  EXPECT_EQ(load_embeddings(dir / "e.bin").model_id(), "e");
  EXPECT_EQ(parse_embedding_format("binary_f32"), EmbeddingFormat::kBinaryF32);
  EXPECT_THROW(parse_embedding_format("npy"), ConfigError);

  std::ofstream(dir / "bad.jsonl") << R"({"id": "a", "vector": [1, 2]})" << '\n'
                                   << R"({"id": "b", "vector": [1, 2, 3]})" << '\n';
  EXPECT_THROW(load_embeddings(dir / "bad.jsonl"), DataError);
  std::ofstream(dir / "bad.bin", std::ios::binary) << "DPBE\x01";
  EXPECT_THROW(load_embeddings(dir / "bad.bin"), DataError);
}

class CountingEmbedder final : public EmbeddingEndpoint {
 public:
  std::string model_id() const override { return "counting"; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override {
    batches.push_back(texts.size());
    std::vector<std::vector<float>> out;
    for (const auto& t : texts) out.push_back({static_cast<float>(t.size()), 1.0f});
    return out;
  }
  mutable std::vector<std::size_t> batches;
};

TEST(EmbeddingFetcher, BatchesDeduplicatesAndCaches) {
  auto ep = std::make_shared<CountingEmbedder>();
  EmbeddingFetcher fetcher(ep, 2);
  std::vector<std::string> texts{"a", "bb", "a", "ccc", "dddd", "eeeee"};
  const auto v = fetcher.fetch(texts);
  ASSERT_EQ(v.size(), texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(v[i](0), float(texts[i].size()));
  EXPECT_EQ(ep->batches, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_EQ(fetcher.network_calls(), 3u);
  fetcher.fetch(texts);
  EXPECT_EQ(fetcher.network_calls(), 3u);
}

class ReverseReranker final : public RerankEndpoint {
 public:
  std::string model_id() const override { return "reverse"; }
  std::vector<double> rerank(const std::string& query,
                             std::span<const std::string> documents) const override {
    last_query = query;
    std::vector<double> out;
    for (std::size_t i = 0; i < documents.size() + extra; ++i) out.push_back(double(i));
    return out;
  }
  mutable std::string last_query;
  std::size_t extra = 0;
};

TEST(ExternalRetriever, UsesRecordTexts) {
  auto records = std::make_shared<const std::vector<McqRecord>>(testing::numbered_records(4));
  auto ep = std::make_shared<ReverseReranker>();
  ExternalRetriever ret("ext", ep, records);
  std::vector<std::string> pool{"r01", "r02", "r03"};
  EXPECT_EQ(rank_documents(ret, "r00", pool).ranked_doc_ids,
            (std::vector<std::string>{"r03", "r02", "r01"}));
  EXPECT_EQ(ep->last_query, "question 0?");
  EXPECT_EQ(document_text((*records)[1]), "Q: question 1?\nA: answer 1");
  ep->extra = 1;
  EXPECT_THROW(ret.score("r00", pool), ProtocolError);
}

}  // namespace
}  // namespace dpobench
