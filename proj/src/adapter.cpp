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

#include "dpobench/adapter.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

namespace dpobench {

Combiner parse_combiner(std::string_view name) {
  if (name == "prod_absdiff") return Combiner::kProdAbsDiff;
  if (name == "concat") return Combiner::kConcat;
  if (name == "prod") return Combiner::kProd;
  throw ConfigError("unknown combiner '" + std::string(name) + "'");
}

std::string_view to_string(Combiner c) {
  switch (c) {
    case Combiner::kProdAbsDiff: return "prod_absdiff";
    case Combiner::kConcat: return "concat";
    case Combiner::kProd: return "prod";
  }
  return "?";
}

RewardTransform parse_reward_transform(std::string_view name) {
  if (name == "raw") return RewardTransform::kRaw;
  if (name == "per_query_standardize") return RewardTransform::kPerQueryStandardize;
  throw ConfigError("unknown reward transform '" + std::string(name) + "'");
}

std::string_view to_string(RewardTransform t) {
  return t == RewardTransform::kRaw ? "raw" : "per_query_standardize";
}

std::vector<TrainingTriple> build_triples(std::span<const RewardObservation> observations,
                                          double delta) {
  std::map<std::string, std::map<std::string, double>> by_query;
  for (const auto& o : observations) by_query[o.query_id][o.doc_id] = o.reward;

  std::vector<TrainingTriple> triples;
  for (const auto& [q, docs] : by_query) {
    for (auto a = docs.begin(); a != docs.end(); ++a) {
      for (auto b = std::next(a); b != docs.end(); ++b) {
        const double gap = a->second - b->second;
        if (gap > delta) {
          triples.push_back({q, a->first, b->first, gap});
        } else if (-gap > delta) {
          triples.push_back({q, b->first, a->first, -gap});
        }
      }
    }
  }
  return triples;
}

namespace {

std::vector<RewardObservation> transformed(std::span<const RewardObservation> observations,
                                           RewardTransform transform) {
  std::vector<RewardObservation> out(observations.begin(), observations.end());
  if (transform == RewardTransform::kRaw) return out;
  std::map<std::string, std::pair<double, double>> moments;  // sum, sum of squares
  std::map<std::string, std::size_t> counts;
  for (const auto& o : out) {
    auto& m = moments[o.query_id];
    m.first += o.reward;
    m.second += o.reward * o.reward;
    ++counts[o.query_id];
  }
  for (auto& o : out) {
    const auto [s, ss] = moments[o.query_id];
    const double n = static_cast<double>(counts[o.query_id]);
    const double mean = s / n;
    const double var = std::max(0.0, ss / n - mean * mean);
    o.reward = var > 0.0 ? (o.reward - mean) / std::sqrt(var) : 0.0;
  }
  return out;
}

void validate(const TrainConfig& c) {
  if (c.inner_dim < 1) throw ConfigError("adapter inner_dim must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(c.delta >= 0.0)) throw ConfigError("delta must be >= 0");
}

struct Adam {
  Adapter m, v;
  double beta1, beta2, eps, lr;
  std::size_t t = 0;

  template <typename P, typename G, typename M, typename V>
  void step_block(P& p, const G& g, M& mo, V& ve, double c1, double c2) {
    mo = beta1 * mo + (1.0 - beta1) * g;
    ve = beta2 * ve + (1.0 - beta2) * g.cwiseProduct(g);
    p.array() -= lr * (mo.array() / c1) / ((ve.array() / c2).sqrt() + eps);
  }

  void step(Adapter& p, const AdapterGradient<double>& g) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    step_block(p.W, g.dW, m.W, v.W, c1, c2);
    step_block(p.b, g.db, m.b, v.b, c1, c2);
    step_block(p.w, g.dw, m.w, v.w, c1, c2);
  }
};

}  // namespace

TrainResult train(Adapter init, std::span<const RewardObservation> observations,
                  const EmbeddingStore& queries, const EmbeddingStore& docs,
                  const TrainConfig& config) {
  validate(config);
  if (!init.shapes_consistent() ||
      init.joint_dim() != joint_dimension(queries.dimension(), init.combiner)) {
    throw DataError("adapter shape does not match the embedding dimension");
  }
  const auto rewards = transformed(observations, config.reward_transform);
  const auto triples = build_triples(rewards, config.delta);
  if (triples.empty()) throw DataError("no training triples: all rewards tied within delta");
  const auto batch = make_triple_batch<double>(queries, docs, triples, init.combiner);

  TrainResult result{std::move(init), {}, triples.size()};
  Adapter& model = result.model;
  Adam adam{Adapter::zeros(model.inner_dim(), model.joint_dim(), model.combiner),
            Adapter::zeros(model.inner_dim(), model.joint_dim(), model.combiner),
            config.adam_beta1,
            config.adam_beta2,
            config.adam_epsilon,
            config.learning_rate};

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed ^ model.seed, "adapter/order"));
  auto grad = AdapterGradient<double>::zeros_like(model);
  result.loss_trace.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> subset(order.data() + start, n);
      grad.dW.setZero();
      grad.db.setZero();
      grad.dw.setZero();
      epoch_loss += loss_and_gradient<double>(model, batch, subset, &grad);
      const double scale = 1.0 / static_cast<double>(n);
      grad.dW *= scale;
      grad.db *= scale;
      grad.dw *= scale;
      adam.step(model, grad);
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  if (!model.all_finite()) throw DataError("training diverged to non-finite parameters");
  return result;
}

TrainResult train(std::span<const RewardObservation> observations, const EmbeddingStore& queries,
                  const EmbeddingStore& docs, const TrainConfig& config) {
  validate(config);
  auto init = Adapter::initialized(config.inner_dim,
                                   joint_dimension(queries.dimension(), config.combiner),
                                   config.combiner, config.seed);
  return train(std::move(init), observations, queries, docs, config);
}

namespace {

constexpr const char* kCheckpointFormat = "dpobench-adapter";
constexpr int kCheckpointVersion = 1;

template <typename Derived>
nlohmann::json flat(const Eigen::DenseBase<Derived>& m) {
  // Row-major order.
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  }
  return a;
}

nlohmann::json member_json(const Adapter& m) {
  if (!m.all_finite()) throw DataError("refusing to save a non-finite adapter");
  return {{"combiner", to_string(m.combiner)},
          {"seed", m.seed},
          {"d1", m.inner_dim()},
          {"d2", m.joint_dim()},
          {"W", flat(m.W)},
          {"b", flat(m.b)},
          {"w", flat(m.w)}};
}

Adapter member_from_json(const nlohmann::json& j) {
  const auto d1 = j.at("d1").get<Eigen::Index>();
  const auto d2 = j.at("d2").get<Eigen::Index>();
  if (d1 < 1 || d2 < 1) throw DataError("checkpoint: bad shape");
  Adapter m = Adapter::zeros(d1, d2, parse_combiner(j.at("combiner").get<std::string>()));
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& W = j.at("W");
  const auto& b = j.at("b");
  const auto& w = j.at("w");
  if (W.size() != static_cast<std::size_t>(d1 * d2) || b.size() != static_cast<std::size_t>(d1) ||
      w.size() != static_cast<std::size_t>(d1)) {
    throw DataError("checkpoint: parameter count does not match shape");
  }
  for (Eigen::Index i = 0; i < d1; ++i) {
    for (Eigen::Index k = 0; k < d2; ++k) m.W(i, k) = W[static_cast<std::size_t>(i * d2 + k)];
    m.b(i) = b[static_cast<std::size_t>(i)];
    m.w(i) = w[static_cast<std::size_t>(i)];
  }
  if (!m.all_finite()) throw DataError("checkpoint: non-finite parameters");
  return m;
}

}  // namespace

nlohmann::json to_json(const AdapterCheckpoint& checkpoint) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : checkpoint.members) members.push_back(member_json(m));
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"base_model_id", checkpoint.base_model_id},
          {"provenance", checkpoint.provenance},
          {"members", members}};
}

AdapterCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kCheckpointFormat) throw DataError("not an adapter checkpoint");
    if (j.at("version") != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + j.at("version").dump());
    }
    AdapterCheckpoint c;
    c.base_model_id = j.at("base_model_id").get<std::string>();
    c.provenance = j.value("provenance", nlohmann::json::object());
    for (const auto& m : j.at("members")) c.members.push_back(member_from_json(m));
    if (c.members.empty()) throw DataError("checkpoint has no members");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const AdapterCheckpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(checkpoint).dump(1) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

AdapterCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

void write_loss_trace_csv(std::ostream& out, std::span<const std::vector<double>> traces) {
  out << "member,epoch,loss\n";
  char buf[64];
  for (std::size_t m = 0; m < traces.size(); ++m) {
    for (std::size_t e = 0; e < traces[m].size(); ++e) {
      std::snprintf(buf, sizeof buf, "%.17g", traces[m][e]);
      out << m << ',' << e << ',' << buf << '\n';
    }
  }
}

AdapterRetriever::AdapterRetriever(std::string id, AdapterCheckpoint checkpoint,
                                   std::shared_ptr<const EmbeddingStore> queries,
                                   std::shared_ptr<const EmbeddingStore> docs)
    : id_(std::move(id)),
      checkpoint_(std::move(checkpoint)),
      queries_(std::move(queries)),
      docs_(std::move(docs)) {
  if (!queries_ || !docs_) throw DataError("adapter retriever needs embedding stores");
  if (checkpoint_.members.empty()) throw DataError("adapter retriever needs a model");
  const Combiner c = checkpoint_.members.front().combiner;
  for (const auto& m : checkpoint_.members) {
    if (m.combiner != c || m.joint_dim() != joint_dimension(queries_->dimension(), c)) {
      throw DataError("adapter " + id_ + " does not fit embedding dimension " +
                      std::to_string(queries_->dimension()));
    }
  }
}

std::vector<double> AdapterRetriever::score(const std::string& query_id,
                                            std::span<const std::string> doc_ids) const {
  const Combiner c = checkpoint_.members.front().combiner;
  const auto q = queries_->row(query_id);
  Mat<double> H(checkpoint_.members.front().joint_dim(), static_cast<Eigen::Index>(doc_ids.size()));
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    H.col(static_cast<Eigen::Index>(i)) = joint_features<double>(q, docs_->row(doc_ids[i]), c);
  }
  Vec<double> total = Vec<double>::Zero(H.cols());
  for (const auto& m : checkpoint_.members) total += m.score_columns(H);
  total /= static_cast<double>(checkpoint_.members.size());
  return {total.begin(), total.end()};
}

}  // namespace dpobench
