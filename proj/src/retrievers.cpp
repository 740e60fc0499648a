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

#include "dpobench/retrievers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "dpobench/rng.hpp"

namespace dpobench {
namespace {

using nlohmann::json;

constexpr char kBinaryMagic[4] = {'D', 'P', 'B', 'E'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw DataError("binary embeddings: truncated file");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return static_cast<T>(v);
}

struct RowBuilder {
  std::vector<std::string> ids;
  std::vector<float> flat;
  Eigen::Index dim = -1;

  void add(std::string id, const std::vector<float>& v) {
    if (dim < 0) dim = static_cast<Eigen::Index>(v.size());
    if (static_cast<Eigen::Index>(v.size()) != dim) {
      throw DataError("embedding '" + id + "' has dimension " + std::to_string(v.size()) +
                      ", expected " + std::to_string(dim));
    }
    ids.push_back(std::move(id));
    flat.insert(flat.end(), v.begin(), v.end());
  }

  EmbeddingStore build(std::string model_id, bool normalized) {
    const Eigen::Index rows = static_cast<Eigen::Index>(ids.size());
    EmbeddingMatrix m = Eigen::Map<const EmbeddingMatrix>(flat.data(), rows, std::max<Eigen::Index>(dim, 0));
    return EmbeddingStore(std::move(model_id), std::move(ids), std::move(m), normalized);
  }
};

}  // namespace

EmbeddingStore::EmbeddingStore(std::string model_id, std::vector<std::string> ids,
                               EmbeddingMatrix vectors, bool normalized)
    : model_id_(std::move(model_id)),
      ids_(std::move(ids)),
      vectors_(std::move(vectors)),
      normalized_(normalized) {
  if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows()) {
    throw DataError("embedding store: " + std::to_string(ids_.size()) + " ids for " +
                    std::to_string(vectors_.rows()) + " rows");
  }
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    const auto& id = ids_[static_cast<std::size_t>(i)];
    if (!index_.emplace(id, i).second) throw DataError("duplicate embedding id '" + id + "'");
    if (!vectors_.row(i).allFinite()) throw DataError("non-finite embedding for '" + id + "'");
    if (normalized_ && std::abs(vectors_.row(i).cast<double>().norm() - 1.0) > 1e-6) {
      throw DataError("embedding '" + id + "' is flagged normalized but is not unit length");
    }
  }
}

Eigen::Index EmbeddingStore::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw DataError("missing embedding for '" + id + "' in " + model_id_);
  }
  return it->second;
}

EmbeddingStore EmbeddingStore::normalized_copy() const {
  EmbeddingMatrix m = vectors_;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).cast<double>().norm();
    if (n == 0.0) throw DataError("cannot normalize zero embedding '" + ids_[i] + "'");
    m.row(i) = (m.row(i).cast<double>() / n).cast<float>();
  }
  return EmbeddingStore(model_id_, ids_, std::move(m), true);
}

EmbeddingFormat parse_embedding_format(std::string_view name) {
  if (name == "jsonl_vectors" || name == "jsonl") return EmbeddingFormat::kJsonlVectors;
  if (name == "binary_f32" || name == "bin") return EmbeddingFormat::kBinaryF32;
  throw ConfigError("unknown embedding format '" + std::string(name) + "'");
}

EmbeddingFormat embedding_format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? EmbeddingFormat::kBinaryF32
                                    : EmbeddingFormat::kJsonlVectors;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings " + path.string());
  RowBuilder rows;
  std::string model_id = path.stem().string();
  bool normalized = false;

  if (format == EmbeddingFormat::kJsonlVectors) {
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        if (!j.contains("id") && j.contains("model_id")) {
          model_id = j.at("model_id").get<std::string>();
          normalized = j.value("normalized", false);
          continue;
        }
        std::string id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                                : std::to_string(j.at("id").get<long long>());
        rows.add(std::move(id), j.at("vector").get<std::vector<float>>());
      } catch (const json::exception& e) {
        throw DataError(path.string() + ": line " + std::to_string(row) + ": " + e.what());
      }
    }
  } else {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kBinaryMagic, 4) != 0) {
      throw DataError(path.string() + ": not a binary embedding file");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kBinaryVersion) {
      throw DataError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const auto dim = get_le<std::uint32_t>(in);
    const auto count = get_le<std::uint64_t>(in);
    std::vector<float> v(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
      const auto len = get_le<std::uint32_t>(in);
      std::string id(len, '\0');
      if (!in.read(id.data(), len)) throw DataError(path.string() + ": truncated id");
      for (auto& x : v) x = std::bit_cast<float>(get_le<std::uint32_t>(in));
      rows.add(std::move(id), v);
    }
  }
  return rows.build(std::move(model_id), normalized);
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  return load_embeddings(path, embedding_format_from_path(path));
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store,
                     EmbeddingFormat format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embeddings " + path.string());
  const auto& m = store.vectors();
  if (format == EmbeddingFormat::kJsonlVectors) {
    out << json{{"model_id", store.model_id()}, {"normalized", store.normalized()}}.dump()
        << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<float> v(m.row(i).data(), m.row(i).data() + m.cols());
      out << json{{"id", store.ids()[i]}, {"vector", v}}.dump() << '\n';
    }
  } else {
    out.write(kBinaryMagic, 4);
    put_le<std::uint32_t>(out, kBinaryVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const auto& id = store.ids()[i];
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
      out.write(id.data(), static_cast<std::streamsize>(id.size()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(m(i, c)));
      }
    }
  }
}

std::string document_text(const McqRecord& record) {
  return "Q: " + record.question + "\nA: " + record.answer;
}

std::string query_text(const McqRecord& record) { return record.question; }

CosineRetriever::CosineRetriever(std::string id, std::shared_ptr<const EmbeddingStore> queries,
                                 std::shared_ptr<const EmbeddingStore> docs)
    : id_(std::move(id)), queries_(std::move(queries)), docs_(std::move(docs)) {
  if (queries_->dimension() != docs_->dimension()) {
    throw DataError("cosine retriever " + id_ + ": query and document dimensions differ");
  }
}

std::vector<double> CosineRetriever::score(const std::string& query_id,
                                           std::span<const std::string> doc_ids) const {
  const auto q = queries_->row(query_id);
  std::vector<double> out;
  out.reserve(doc_ids.size());
  for (const auto& d : doc_ids) out.push_back(cosine_relevance(q, docs_->row(d)));
  return out;
}

ExternalRetriever::ExternalRetriever(std::string id, std::shared_ptr<const RerankEndpoint> endpoint,
                                     std::shared_ptr<const std::vector<McqRecord>> records)
    : id_(std::move(id)),
      endpoint_(std::move(endpoint)),
      records_(std::move(records)),
      index_(*records_) {}

std::vector<double> ExternalRetriever::score(const std::string& query_id,
                                             std::span<const std::string> doc_ids) const {
  std::vector<std::string> texts;
  texts.reserve(doc_ids.size());
  for (const auto& d : doc_ids) texts.push_back(document_text(index_.at(d)));
  std::vector<double> scores = endpoint_->rerank(query_text(index_.at(query_id)), texts);
  if (scores.size() != doc_ids.size()) {
    throw ProtocolError(id_ + ": rerank returned " + std::to_string(scores.size()) +
                        " scores for " + std::to_string(doc_ids.size()) + " documents");
  }
  return scores;
}

RetrieverRanking rank_by_scores(const std::string& query_id, std::span<const std::string> pool,
                                std::span<const double> scores) {
  if (scores.size() != pool.size()) throw DataError("rank: one score per document required");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return pool[a] < pool[b];
  });
  RetrieverRanking ranking{query_id, {}};
  ranking.ranked_doc_ids.reserve(pool.size());
  for (std::size_t i : order) ranking.ranked_doc_ids.push_back(pool[i]);
  return ranking;
}

RetrieverRanking rank_documents(const Retriever& retriever, const std::string& query_id,
                                std::span<const std::string> pool) {
  const std::vector<double> scores = retriever.score(query_id, pool);
  return rank_by_scores(query_id, pool, scores);
}

EmbeddingFetcher::EmbeddingFetcher(std::shared_ptr<const EmbeddingEndpoint> endpoint,
                                   std::size_t batch_size)
    : endpoint_(std::move(endpoint)), batch_size_(std::max<std::size_t>(batch_size, 1)) {}

std::vector<Eigen::VectorXf> EmbeddingFetcher::fetch(std::span<const std::string> texts) {
  auto key_of = [&](const std::string& t) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(t)));
    return endpoint_->model_id() + '\x1f' + buf;
  };
  std::lock_guard lock(mu_);
  std::vector<std::string> missing;
  std::unordered_map<std::string, bool> queued;
  for (const auto& t : texts) {
    const std::string key = key_of(t);
    if (!cache_.count(key) && !queued[key]) {
      queued[key] = true;
      missing.push_back(t);
    }
  }
  for (std::size_t start = 0; start < missing.size(); start += batch_size_) {
    const std::size_t n = std::min(batch_size_, missing.size() - start);
    std::span<const std::string> batch(missing.data() + start, n);
    ++calls_;
    const auto vectors = endpoint_->embed(batch);
    if (vectors.size() != n) {
      throw ProtocolError(endpoint_->model_id() + ": embedding count mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto dim = static_cast<Eigen::Index>(vectors[i].size());
      if (dimension_ < 0) dimension_ = dim;
      if (dim != dimension_) {
        throw ProtocolError(endpoint_->model_id() + ": embedding dimension drifted from " +
                            std::to_string(dimension_) + " to " + std::to_string(dim));
      }
      cache_[key_of(batch[i])] =
          Eigen::Map<const Eigen::VectorXf>(vectors[i].data(), dim);
    }
  }
  std::vector<Eigen::VectorXf> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(cache_.at(key_of(t)));
  return out;
}

std::size_t EmbeddingFetcher::network_calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<Eigen::VectorXf> fetch_embeddings(EmbeddingFetcher& fetcher,
                                              std::span<const std::string> texts) {
  return fetcher.fetch(texts);
}

}  // namespace dpobench
