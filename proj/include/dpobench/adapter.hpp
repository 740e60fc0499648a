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

// Cross-encoder adapter over frozen base embeddings:
//
//   h = combine(e_q, e_d)                      (joint features, dim d2)
//   s(q, d) = w^T relu(W h + b)                W: d1 x d2, b, w: d1
//
// trained with the pairwise logistic loss
//
//   L = sum over (q, d+, d-) of log(1 + exp(-(s(q, d+) - s(q, d-))))
//
// where d+ earned a strictly higher DPO reward than d- for the same query.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dpobench/errors.hpp"
#include "dpobench/retrievers.hpp"
#include "dpobench/rng.hpp"

namespace dpobench {

enum class Combiner {
  kProdAbsDiff,  // [e_q * e_d, |e_q - e_d|]
  kConcat,       // [e_q, e_d]
  kProd,         // e_q * e_d
};

Combiner parse_combiner(std::string_view name);
std::string_view to_string(Combiner c);

constexpr Eigen::Index joint_dimension(Eigen::Index base_dim, Combiner c) {
  return c == Combiner::kProd ? base_dim : 2 * base_dim;
}

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar, typename DerivedQ, typename DerivedD>
Vec<Scalar> joint_features(const Eigen::MatrixBase<DerivedQ>& e_q,
                           const Eigen::MatrixBase<DerivedD>& e_d, Combiner combiner) {
  if (e_q.size() != e_d.size()) throw DataError("joint features: dimension mismatch");
  const Eigen::Index n = e_q.size();
  const auto q = e_q.derived().reshaped().template cast<Scalar>();
  const auto d = e_d.derived().reshaped().template cast<Scalar>();
  Vec<Scalar> h(joint_dimension(n, combiner));
  switch (combiner) {
    case Combiner::kProdAbsDiff:
      h.head(n) = q.cwiseProduct(d);
      h.tail(n) = (q - d).cwiseAbs();
      break;
    case Combiner::kConcat:
      h.head(n) = q;
      h.tail(n) = d;
      break;
    case Combiner::kProd:
      h = q.cwiseProduct(d);
      break;
  }
  return h;
}

template <typename Scalar>
struct AdapterModel {
  Mat<Scalar> W;
  Vec<Scalar> b;
  Vec<Scalar> w;
  Combiner combiner = Combiner::kProdAbsDiff;
  std::uint64_t seed = 0;

  static AdapterModel zeros(Eigen::Index inner_dim, Eigen::Index joint_dim, Combiner c) {
    return {Mat<Scalar>::Zero(inner_dim, joint_dim), Vec<Scalar>::Zero(inner_dim),
            Vec<Scalar>::Zero(inner_dim), c, 0};
  }

  // Symmetric uniform, W and b scaled by 1/sqrt(d2), w by 1/sqrt(d1).
  static AdapterModel initialized(Eigen::Index inner_dim, Eigen::Index joint_dim, Combiner c,
                                  std::uint64_t seed) {
    AdapterModel m = zeros(inner_dim, joint_dim, c);
    m.seed = seed;
    Rng rng(derive_seed(seed, "adapter/init"));
    const Scalar a_in = Scalar(1) / std::sqrt(Scalar(joint_dim));
    const Scalar a_out = Scalar(1) / std::sqrt(Scalar(inner_dim));
    for (Eigen::Index j = 0; j < m.W.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.W.rows(); ++i) m.W(i, j) = Scalar(rng.uniform(-1, 1)) * a_in;
    }
    for (Eigen::Index i = 0; i < inner_dim; ++i) m.b(i) = Scalar(rng.uniform(-1, 1)) * a_in;
    for (Eigen::Index i = 0; i < inner_dim; ++i) m.w(i) = Scalar(rng.uniform(-1, 1)) * a_out;
    return m;
  }

  Eigen::Index inner_dim() const { return W.rows(); }
  Eigen::Index joint_dim() const { return W.cols(); }
  Eigen::Index parameter_count() const { return W.size() + b.size() + w.size(); }

  bool shapes_consistent() const { return b.size() == W.rows() && w.size() == W.rows(); }
  bool all_finite() const { return W.allFinite() && b.allFinite() && w.allFinite(); }

  template <typename Derived>
  Scalar score_features(const Eigen::MatrixBase<Derived>& h) const {
    return w.dot((W * h + b).cwiseMax(Scalar(0)));
  }

  // One score per column of H.
  template <typename Derived>
  Vec<Scalar> score_columns(const Eigen::MatrixBase<Derived>& H) const {
    return ((W * H).colwise() + b).cwiseMax(Scalar(0)).transpose() * w;
  }

  bool operator==(const AdapterModel& o) const {
    return combiner == o.combiner && seed == o.seed && W.rows() == o.W.rows() &&
           W.cols() == o.W.cols() && W == o.W && b == o.b && w == o.w;
  }
};

using Adapter = AdapterModel<double>;

template <typename Scalar>
struct AdapterGradient {
  Mat<Scalar> dW;
  Vec<Scalar> db;
  Vec<Scalar> dw;

  static AdapterGradient zeros_like(const AdapterModel<Scalar>& m) {
    return {Mat<Scalar>::Zero(m.W.rows(), m.W.cols()), Vec<Scalar>::Zero(m.b.size()),
            Vec<Scalar>::Zero(m.w.size())};
  }
};

// Score of (query_id, doc_id) with embeddings from the given stores.
template <typename Scalar>
Scalar score(const AdapterModel<Scalar>& model, const EmbeddingStore& queries,
             const EmbeddingStore& docs, const std::string& query_id, const std::string& doc_id) {
  return model.score_features(
      joint_features<Scalar>(queries.row(query_id), docs.row(doc_id), model.combiner));
}

// log(1 + e^x) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

struct RewardObservation {
  std::string query_id;
  std::string doc_id;
  double reward = 0.0;  // the pair's DPO value
};

struct TrainingTriple {
  std::string query_id;
  std::string d_plus;
  std::string d_minus;
  double margin = 0.0;
};

// All within-query doc pairs whose rewards differ by more than `delta`, the
// higher-reward doc as d_plus. Queries and docs are visited in sorted order.
std::vector<TrainingTriple> build_triples(std::span<const RewardObservation> observations,
                                          double delta);

// Joint features of every pair a triple set touches, one column per pair,
// with the triples rewritten as (d_plus column, d_minus column).
template <typename Scalar>
struct TripleBatch {
  Mat<Scalar> features;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> triples;
};

template <typename Scalar>
TripleBatch<Scalar> make_triple_batch(const EmbeddingStore& queries, const EmbeddingStore& docs,
                                      std::span<const TrainingTriple> triples, Combiner combiner) {
  std::unordered_map<std::string, Eigen::Index> column;
  std::vector<std::pair<const std::string*, const std::string*>> pairs;
  auto col_of = [&](const std::string& q, const std::string& d) {
    std::string key = q;
    key.push_back('\x1f');
    key += d;
    auto [it, inserted] = column.try_emplace(std::move(key), static_cast<Eigen::Index>(pairs.size()));
    if (inserted) pairs.emplace_back(&q, &d);
    return it->second;
  };
  TripleBatch<Scalar> batch;
  batch.triples.reserve(triples.size());
  for (const auto& t : triples) {
    const Eigen::Index p = col_of(t.query_id, t.d_plus);
    const Eigen::Index m = col_of(t.query_id, t.d_minus);
    batch.triples.emplace_back(p, m);
  }
  batch.features.resize(joint_dimension(queries.dimension(), combiner),
                        static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    batch.features.col(static_cast<Eigen::Index>(i)) =
        joint_features<Scalar>(queries.row(*pairs[i].first), docs.row(*pairs[i].second), combiner);
  }
  return batch;
}

// Loss summed over `subset` (indices into batch.triples; empty span = all).
// When `grad` is non-null the loss gradient is accumulated into it.
template <typename Scalar>
Scalar loss_and_gradient(const AdapterModel<Scalar>& model, const TripleBatch<Scalar>& batch,
                         std::span<const std::size_t> subset, AdapterGradient<Scalar>* grad) {
  const std::size_t n_triples = subset.empty() ? batch.triples.size() : subset.size();
  if (n_triples == 0) return Scalar(0);
  auto triple_at = [&](std::size_t i) {
    return batch.triples[subset.empty() ? i : subset[i]];
  };

  // Gather the columns this subset touches.
  std::unordered_map<Eigen::Index, Eigen::Index> local;
  std::vector<Eigen::Index> cols;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> local_triples(n_triples);
  auto local_of = [&](Eigen::Index c) {
    auto [it, inserted] = local.try_emplace(c, static_cast<Eigen::Index>(cols.size()));
    if (inserted) cols.push_back(c);
    return it->second;
  };
  for (std::size_t i = 0; i < n_triples; ++i) {
    const auto [p, m] = triple_at(i);
    local_triples[i] = {local_of(p), local_of(m)};
  }
  const Mat<Scalar> H = batch.features(Eigen::all, cols);

  const Mat<Scalar> pre = (model.W * H).colwise() + model.b;
  const Mat<Scalar> act = pre.cwiseMax(Scalar(0));
  const Vec<Scalar> s = act.transpose() * model.w;

  Scalar loss(0);
  Vec<Scalar> ds = Vec<Scalar>::Zero(s.size());
  for (const auto& [p, m] : local_triples) {
    const Scalar diff = s(p) - s(m);
    loss += softplus(-diff);
    // d/d(diff) of softplus(-diff) = -sigmoid(-diff).
    const Scalar c = Scalar(-1) / (Scalar(1) + std::exp(diff));
    ds(p) += c;
    ds(m) -= c;
  }
  if (grad) {
    grad->dw.noalias() += act * ds;
    // Rectifier subgradient is 0 at the kink.
    const Mat<Scalar> mask = (pre.array() > Scalar(0)).template cast<Scalar>().matrix();
    const Mat<Scalar> dpre = model.w.asDiagonal() * mask * ds.asDiagonal();
    grad->dW.noalias() += dpre * H.transpose();
    grad->db.noalias() += dpre.rowwise().sum();
  }
  return loss;
}

template <typename Scalar>
Scalar pairwise_loss(const AdapterModel<Scalar>& model, const TripleBatch<Scalar>& batch) {
  return loss_and_gradient<Scalar>(model, batch, {}, nullptr);
}

template <typename Scalar>
AdapterGradient<Scalar> loss_gradient(const AdapterModel<Scalar>& model,
                                      const TripleBatch<Scalar>& batch) {
  auto grad = AdapterGradient<Scalar>::zeros_like(model);
  loss_and_gradient<Scalar>(model, batch, {}, &grad);
  return grad;
}

template <typename Scalar>
Scalar pairwise_loss(const AdapterModel<Scalar>& model, const EmbeddingStore& queries,
                     const EmbeddingStore& docs, std::span<const TrainingTriple> triples) {
  if (triples.empty()) throw DataError("pairwise loss of an empty triple set");
  return pairwise_loss(model, make_triple_batch<Scalar>(queries, docs, triples, model.combiner));
}

template <typename Scalar>
AdapterGradient<Scalar> loss_gradient(const AdapterModel<Scalar>& model,
                                      const EmbeddingStore& queries, const EmbeddingStore& docs,
                                      std::span<const TrainingTriple> triples) {
  return loss_gradient(model, make_triple_batch<Scalar>(queries, docs, triples, model.combiner));
}

enum class RewardTransform { kRaw, kPerQueryStandardize };
RewardTransform parse_reward_transform(std::string_view name);
std::string_view to_string(RewardTransform t);

struct TrainConfig {
  Eigen::Index inner_dim = 100;
  Combiner combiner = Combiner::kProdAbsDiff;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double delta = 1e-4;
  std::uint64_t seed = 0;
  RewardTransform reward_transform = RewardTransform::kRaw;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct TrainResult {
  Adapter model;
  std::vector<double> loss_trace;  // mean per-triple loss of each epoch
  std::size_t n_triples = 0;
};

// Mini-batch Adam on the mean pairwise loss of each batch, starting from
// `init`. Single-threaded and bit-reproducible for fixed inputs. Throws
// DataError when no triple survives the delta margin.
TrainResult train(Adapter init, std::span<const RewardObservation> observations,
                  const EmbeddingStore& queries, const EmbeddingStore& docs,
                  const TrainConfig& config);
// Same, from a fresh initialization seeded by config.seed.
TrainResult train(std::span<const RewardObservation> observations, const EmbeddingStore& queries,
                  const EmbeddingStore& docs, const TrainConfig& config);

// Several adapters scored as their mean; a single-member ensemble is a plain
// adapter.
struct AdapterCheckpoint {
  std::string base_model_id;
  std::vector<Adapter> members;
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const AdapterCheckpoint& o) const {
    return base_model_id == o.base_model_id && members == o.members && provenance == o.provenance;
  }
};

nlohmann::json to_json(const AdapterCheckpoint& checkpoint);
AdapterCheckpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const AdapterCheckpoint& checkpoint);
AdapterCheckpoint load_checkpoint(const std::filesystem::path& path);

void write_loss_trace_csv(std::ostream& out, std::span<const std::vector<double>> traces);

class AdapterRetriever final : public Retriever {
 public:
  AdapterRetriever(std::string id, AdapterCheckpoint checkpoint,
                   std::shared_ptr<const EmbeddingStore> queries,
                   std::shared_ptr<const EmbeddingStore> docs);

  std::string id() const override { return id_; }
  RetrieverKind kind() const override { return RetrieverKind::kAdapterReranker; }
  std::vector<double> score(const std::string& query_id,
                            std::span<const std::string> doc_ids) const override;

 private:
  std::string id_;
  AdapterCheckpoint checkpoint_;
  std::shared_ptr<const EmbeddingStore> queries_;
  std::shared_ptr<const EmbeddingStore> docs_;
};

}  // namespace dpobench
