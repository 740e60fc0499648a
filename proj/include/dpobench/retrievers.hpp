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

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "dpobench/datasets.hpp"
#include "dpobench/errors.hpp"
#include "dpobench/metrics.hpp"

namespace dpobench {

using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Immutable id -> vector table, one row per record.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  // Throws DataError on duplicate ids, row/id count mismatch, non-finite
  // components, or (when `normalized`) a row whose norm is off by > 1e-6.
  EmbeddingStore(std::string model_id, std::vector<std::string> ids, EmbeddingMatrix vectors,
                 bool normalized = false);

  const std::string& model_id() const { return model_id_; }
  Eigen::Index dimension() const { return vectors_.cols(); }
  std::size_t size() const { return ids_.size(); }
  bool normalized() const { return normalized_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const EmbeddingMatrix& vectors() const { return vectors_; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  Eigen::Index index_of(const std::string& id) const;
  EmbeddingMatrix::ConstRowXpr row(const std::string& id) const {
    return vectors_.row(index_of(id));
  }

  // Copy with every row scaled to unit L2 norm.
  EmbeddingStore normalized_copy() const;

  bool operator==(const EmbeddingStore& o) const {
    return model_id_ == o.model_id_ && ids_ == o.ids_ && normalized_ == o.normalized_ &&
           vectors_.rows() == o.vectors_.rows() && vectors_.cols() == o.vectors_.cols() &&
           vectors_ == o.vectors_;
  }

 private:
  std::string model_id_;
  std::vector<std::string> ids_;
  EmbeddingMatrix vectors_;
  bool normalized_ = false;
  std::unordered_map<std::string, Eigen::Index> index_;
};

// (e_q . e_d) / (|e_q| |e_d|), accumulated in double.
template <typename DerivedA, typename DerivedB>
double cosine_relevance(const Eigen::MatrixBase<DerivedA>& e_q,
                        const Eigen::MatrixBase<DerivedB>& e_d) {
  if (e_q.size() != e_d.size()) {
    throw DataError("cosine: dimension mismatch " + std::to_string(e_q.size()) + " vs " +
                    std::to_string(e_d.size()));
  }
  const auto q = e_q.template cast<double>();
  const auto d = e_d.template cast<double>();
  const double nq = q.norm();
  const double nd = d.norm();
  if (nq == 0.0 || nd == 0.0) throw DataError("cosine: zero-norm vector");
  const double c = q.cwiseProduct(d).sum() / (nq * nd);
  return std::clamp(c, -1.0, 1.0);
}

enum class EmbeddingFormat { kJsonlVectors, kBinaryF32 };
EmbeddingFormat parse_embedding_format(std::string_view name);
EmbeddingFormat embedding_format_from_path(const std::filesystem::path& path);

// jsonl_vectors: optional header {"model_id", "normalized"} then one
// {"id", "vector"} per line. binary_f32: "DPBE", u32 version, u32 dimension,
// u64 count, then per row a u32-prefixed id and `dimension` little-endian
// f32 components. Dimension comes from the first row and is enforced after.
EmbeddingStore load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
EmbeddingStore load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store,
                     EmbeddingFormat format);

// Text fed to embedding models and rerankers for a demonstration and a query.
std::string document_text(const McqRecord& record);
std::string query_text(const McqRecord& record);

enum class RetrieverKind { kCosineEmbedding, kAdapterReranker, kExternal };

// Scores (query, document) pairs; higher is better. Pure for a fixed model.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string id() const = 0;
  virtual RetrieverKind kind() const = 0;
  virtual std::vector<double> score(const std::string& query_id,
                                    std::span<const std::string> doc_ids) const = 0;
};

class CosineRetriever final : public Retriever {
 public:
  // `queries` and `docs` may be the same store.
  CosineRetriever(std::string id, std::shared_ptr<const EmbeddingStore> queries,
                  std::shared_ptr<const EmbeddingStore> docs);

  std::string id() const override { return id_; }
  RetrieverKind kind() const override { return RetrieverKind::kCosineEmbedding; }
  std::vector<double> score(const std::string& query_id,
                            std::span<const std::string> doc_ids) const override;

 private:
  std::string id_;
  std::shared_ptr<const EmbeddingStore> queries_;
  std::shared_ptr<const EmbeddingStore> docs_;
};

// Batch rerank endpoint: a query text and candidate texts in, one score per
// candidate out.
class RerankEndpoint {
 public:
  virtual ~RerankEndpoint() = default;
  virtual std::string model_id() const = 0;
  virtual std::vector<double> rerank(const std::string& query,
                                     std::span<const std::string> documents) const = 0;
};

class ExternalRetriever final : public Retriever {
 public:
  ExternalRetriever(std::string id, std::shared_ptr<const RerankEndpoint> endpoint,
                    std::shared_ptr<const std::vector<McqRecord>> records);

  std::string id() const override { return id_; }
  RetrieverKind kind() const override { return RetrieverKind::kExternal; }
  std::vector<double> score(const std::string& query_id,
                            std::span<const std::string> doc_ids) const override;

 private:
  std::string id_;
  std::shared_ptr<const RerankEndpoint> endpoint_;
  std::shared_ptr<const std::vector<McqRecord>> records_;
  RecordIndex index_;
};

// Sort by score descending with ties broken by ascending doc_id.
RetrieverRanking rank_by_scores(const std::string& query_id, std::span<const std::string> pool,
                                std::span<const double> scores);
// Ranks the whole pool with `retriever`.
RetrieverRanking rank_documents(const Retriever& retriever, const std::string& query_id,
                                std::span<const std::string> pool);

// Remote embedding model: texts in, one vector per text out.
class EmbeddingEndpoint {
 public:
  virtual ~EmbeddingEndpoint() = default;
  virtual std::string model_id() const = 0;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) const = 0;
};

// Order-preserving, batched, cached by (model_id, text hash).
class EmbeddingFetcher {
 public:
  explicit EmbeddingFetcher(std::shared_ptr<const EmbeddingEndpoint> endpoint,
                            std::size_t batch_size = 16);

  std::vector<Eigen::VectorXf> fetch(std::span<const std::string> texts);
  std::size_t network_calls() const;

 private:
  std::shared_ptr<const EmbeddingEndpoint> endpoint_;
  std::size_t batch_size_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Eigen::VectorXf> cache_;
  std::size_t calls_ = 0;
  Eigen::Index dimension_ = -1;
};

std::vector<Eigen::VectorXf> fetch_embeddings(EmbeddingFetcher& fetcher,
                                              std::span<const std::string> texts);

}  // namespace dpobench
