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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dpobench/cli.hpp"
#include "dpobench/errors.hpp"
#include "dpobench/rng.hpp"

namespace dpobench::cli {

namespace pt = boost::property_tree;

std::uint64_t RunConfig::trial_seed(std::size_t trial) const {
  return derive_seed(seed, "split/" + std::to_string(trial));
}

std::uint64_t RunConfig::dataset_seed(const DatasetEntry& d) const {
  return d.explicit_seed ? d.suite.seed : derive_seed(seed, "dataset/" + d.name);
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool valid_name(const std::string& n) {
  if (n.empty()) return false;
  for (char c : n) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

// Reads typed keys from one section, recording problems instead of throwing
// so that every error in the file is reported together.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree, std::vector<std::string>& errors)
      : name_(std::move(name)), tree_(tree), errors_(errors) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  void error(const std::string& key, const std::string& what) {
    errors_.push_back("[" + name_ + "] " + key + ": " + what);
  }

  void str(const std::string& key, std::string& v) {
    if (auto r = raw(key)) v = *r;
  }
  void size(const std::string& key, std::size_t& v) {
    if (auto r = raw(key)) {
      std::uint64_t x = 0;
      if (parse_u64(*r, x)) {
        v = static_cast<std::size_t>(x);
      } else {
        error(key, "expected a non-negative integer, got '" + *r + "'");
      }
    }
  }
  void u64(const std::string& key, std::uint64_t& v) {
    if (auto r = raw(key)) {
      if (!parse_u64(*r, v)) error(key, "expected a non-negative integer, got '" + *r + "'");
    }
  }
  void real(const std::string& key, double& v) {
    if (auto r = raw(key)) {
      char* end = nullptr;
      errno = 0;
      const double x = std::strtod(r->c_str(), &end);
      if (r->empty() || *end != '\0' || errno != 0 || !std::isfinite(x)) {
        error(key, "expected a finite number, got '" + *r + "'");
      } else {
        v = x;
      }
    }
  }
  void flag(const std::string& key, bool& v) {
    if (auto r = raw(key)) {
      if (*r == "true" || *r == "1" || *r == "yes") {
        v = true;
      } else if (*r == "false" || *r == "0" || *r == "no") {
        v = false;
      } else {
        error(key, "expected true or false, got '" + *r + "'");
      }
    }
  }
  template <typename Enum, typename Parse>
  void choice(const std::string& key, Enum& v, Parse parse) {
    if (auto r = raw(key)) {
      try {
        v = parse(*r);
      } catch (const ConfigError& e) {
        error(key, e.what());
      }
    }
  }
  void path(const std::string& key, std::filesystem::path& v, const std::filesystem::path& base) {
    if (auto r = raw(key)) v = r->empty() ? std::filesystem::path() : (base / *r).lexically_normal();
  }

  void finish() {
    if (!tree_) return;
    for (const auto& [k, _] : *tree_) {
      if (!used_.count(k)) errors_.push_back("[" + name_ + "] unknown key '" + k + "'");
    }
  }

 private:
  static bool parse_u64(const std::string& s, std::uint64_t& out) {
    if (s.empty() || s[0] == '-' || s[0] == '+') return false;
    char* end = nullptr;
    errno = 0;
    const unsigned long long x = std::strtoull(s.c_str(), &end, 10);
    if (*end != '\0' || errno != 0) return false;
    out = x;
    return true;
  }

  std::string name_;
  const pt::ptree* tree_;
  std::vector<std::string>& errors_;
  std::set<std::string> used_;
};

void read_http(Section& s, HttpEndpointConfig& h, std::string& api_key_env) {
  s.str("url", h.base_url);
  s.str("path", h.path);
  s.str("model", h.model);
  s.str("api_key_env", api_key_env);
  std::size_t timeout_ms = static_cast<std::size_t>(h.timeout.count());
  s.size("timeout_ms", timeout_ms);
  h.timeout = std::chrono::milliseconds(timeout_ms);
  s.real("rate", h.rate_per_second);
  s.real("burst", h.burst);
}

void check_http(const std::string& section, const HttpEndpointConfig& h,
                const std::string& api_key_env, std::vector<std::string>& errors) {
  if (h.base_url.empty()) errors.push_back("[" + section + "] url is required");
  if (h.model.empty()) errors.push_back("[" + section + "] model is required");
  if (!api_key_env.empty() && !std::getenv(api_key_env.c_str())) {
    errors.push_back("[" + section + "] environment variable " + api_key_env + " is not set");
  }
}

void require_file(const std::string& section, const std::string& key,
                  const std::filesystem::path& p, std::vector<std::string>& errors) {
  if (p.empty()) {
    errors.push_back("[" + section + "] " + key + " is required");
  } else if (!std::filesystem::is_regular_file(p)) {
    errors.push_back("[" + section + "] " + key + ": no such file " + p.string());
  }
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& source,
                           const Overrides& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }

  RunConfig c;
  c.source = source.empty() ? std::filesystem::path() : std::filesystem::absolute(source);
  const std::filesystem::path base = c.source.empty() ? std::filesystem::current_path()
                                                      : c.source.parent_path();
  std::vector<std::string> errors;
  auto sub = [&](const std::string& name) -> const pt::ptree* {
    auto it = tree.find(name);
    return it == tree.not_found() ? nullptr : &it->second;
  };

  {
    Section s("run", sub("run"), errors);
    s.path("out", c.out, base);
    s.u64("seed", c.seed);
    s.size("trials", c.trials);
    std::size_t workers = c.workers;
    s.size("workers", workers);
    c.workers = static_cast<unsigned>(workers);
    std::size_t budget = 0;
    if (s.raw("budget")) {
      s.size("budget", budget);
      c.budget = budget;
    }
    s.choice("policy", c.policy, parse_acquisition_policy);
    s.choice("rbar_policy", c.rbar_policy, parse_rbar_policy);
    std::size_t retries = static_cast<std::size_t>(c.retry.max_retries);
    s.size("max_retries", retries);
    c.retry.max_retries = static_cast<int>(retries);
    std::size_t backoff = static_cast<std::size_t>(c.retry.initial_backoff.count());
    s.size("backoff_ms", backoff);
    c.retry.initial_backoff = std::chrono::milliseconds(backoff);
    s.real("backoff_multiplier", c.retry.backoff_multiplier);
    s.finish();
  }
  {
    Section s("split", sub("split"), errors);
    s.size("n_queries", c.subsample.n_queries);
    s.size("n_docs", c.subsample.n_docs);
    s.size("max_train_queries", c.max_train_queries);
    s.finish();
  }
  {
    auto& a = c.acquisition;
    Section s("acquisition", sub("acquisition"), errors);
    s.real("beta", a.beta);
    s.real("lambda", a.lambda);
    s.real("epsilon", a.epsilon);
    s.size("round_size", a.round_size);
    s.size("docs_per_query", a.docs_per_query);
    s.size("ensemble_size", a.ensemble_size);
    s.real("query_weight_floor", a.query_weight_floor);
    s.flag("center_per_query", a.center_per_query);
    s.size("max_rounds", a.max_rounds);
    s.finish();
  }
  {
    auto& t = c.acquisition.train;
    Section s("adapter", sub("adapter"), errors);
    std::size_t inner = static_cast<std::size_t>(t.inner_dim);
    s.size("inner_dim", inner);
    t.inner_dim = static_cast<Eigen::Index>(inner);
    s.choice("combiner", t.combiner, parse_combiner);
    s.real("learning_rate", t.learning_rate);
    s.size("batch_size", t.batch_size);
    s.size("epochs", t.epochs);
    s.real("delta", t.delta);
    s.choice("reward_transform", t.reward_transform, parse_reward_transform);
    s.finish();
  }
  {
    Section s("compare", sub("compare"), errors);
    if (auto r = s.raw("budgets")) {
      c.compare.budgets.clear();
      for (const auto& item : split_list(*r)) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (*end != '\0' || !(v > 0) || !std::isfinite(v)) {
          s.error("budgets", "bad budget '" + item + "'");
        } else {
          c.compare.budgets.push_back(v);
        }
      }
    }
    s.size("seeds", c.compare.seeds);
    s.flag("track_rounds", c.compare.track_rounds);
    s.finish();
  }
  {
    Section s("leaderboard", sub("leaderboard"), errors);
    if (auto r = s.raw("inputs")) {
      for (const auto& item : split_list(*r)) {
        c.leaderboard_inputs.push_back((base / item).lexically_normal());
      }
    }
    s.finish();
  }

  std::set<std::string> names;
  for (const auto& [section, body] : tree) {
    const auto dot = section.find('.');
    const std::string family = section.substr(0, dot);
    static const std::set<std::string> fixed{"run", "split", "acquisition", "adapter",
                                             "compare", "leaderboard"};
    if (dot == std::string::npos) {
      if (!fixed.count(section)) errors.push_back("unknown section [" + section + "]");
      continue;
    }
    const std::string name = section.substr(dot + 1);
    if (!valid_name(name)) {
      errors.push_back("[" + section + "] names may only use letters, digits, '_' and '-'");
      continue;
    }
    if (family != "dataset" && family != "llm" && family != "retriever") {
      errors.push_back("unknown section [" + section + "]");
      continue;
    }
    if (!names.insert(family + "/" + name).second) {
      errors.push_back("duplicate section [" + section + "]");
      continue;
    }
    Section s(section, &body, errors);
    std::string kind;
    s.str("kind", kind);
    if (family == "dataset") {
      DatasetEntry d;
      d.name = name;
      d.suite.dataset_id = name;
      if (kind == "synthetic" || kind.empty()) {
        d.kind = DatasetKind::kSynthetic;
        if (s.raw("seed")) {
          s.u64("seed", d.suite.seed);
          d.explicit_seed = true;
        }
        s.size("n_records", d.suite.n_records);
        std::size_t ld = static_cast<std::size_t>(d.suite.latent_dim);
        std::size_t ed = static_cast<std::size_t>(d.suite.embedding_dim);
        s.size("latent_dim", ld);
        s.size("embedding_dim", ed);
        d.suite.latent_dim = static_cast<Eigen::Index>(ld);
        d.suite.embedding_dim = static_cast<Eigen::Index>(ed);
        s.real("noise", d.suite.embedding_noise);
        s.real("sharpness", d.suite.sharpness);
        s.real("sign", d.suite.sign);
        s.real("offset", d.suite.offset);
        s.real("gain", d.suite.gain);
        s.str("llm_id", d.suite.llm_id);
        s.str("embedding_model_id", d.suite.embedding_model_id);
        if (d.suite.n_records < 10) s.error("n_records", "must be at least 10");
        if (d.suite.latent_dim < 1 || d.suite.embedding_dim < 1) {
          s.error("latent_dim", "dimensions must be positive");
        }
      } else if (kind == "file") {
        d.kind = DatasetKind::kFile;
        s.path("path", d.path, base);
        s.path("embeddings", d.embeddings, base);
        s.path("query_embeddings", d.query_embeddings, base);
        s.path("doc_embeddings", d.doc_embeddings, base);
        require_file(section, "path", d.path, errors);
        if (!d.embeddings.empty()) {
          require_file(section, "embeddings", d.embeddings, errors);
        } else {
          require_file(section, "query_embeddings", d.query_embeddings, errors);
          require_file(section, "doc_embeddings", d.doc_embeddings, errors);
        }
      } else {
        s.error("kind", "expected synthetic or file, got '" + kind + "'");
      }
      s.finish();
      c.datasets.push_back(std::move(d));
    } else if (family == "llm") {
      LlmEntry l;
      l.name = name;
      if (kind == "synthetic" || kind.empty()) {
        l.kind = LlmKind::kSynthetic;
        s.path("spec", l.spec, base);
        if (!l.spec.empty()) require_file(section, "spec", l.spec, errors);
      } else if (kind == "http") {
        l.kind = LlmKind::kHttp;
        read_http(s, l.http, l.api_key_env);
        check_http(section, l.http, l.api_key_env, errors);
      } else {
        s.error("kind", "expected synthetic or http, got '" + kind + "'");
      }
      s.finish();
      c.llms.push_back(std::move(l));
    } else {
      RetrieverEntry r;
      r.name = name;
      s.str("organization", r.organization);
      if (kind == "cosine" || kind.empty()) {
        r.kind = RetrieverKindEntry::kCosine;
      } else if (kind == "adapter") {
        r.kind = RetrieverKindEntry::kAdapter;
        s.str("checkpoint", r.checkpoint);
      } else if (kind == "external") {
        r.kind = RetrieverKindEntry::kExternal;
        read_http(s, r.http, r.api_key_env);
        check_http(section, r.http, r.api_key_env, errors);
      } else {
        s.error("kind", "expected cosine, adapter or external, got '" + kind + "'");
      }
      s.finish();
      c.retrievers.push_back(std::move(r));
    }
  }

  if (overrides.out) c.out = std::filesystem::absolute(*overrides.out).lexically_normal();
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.budget) {
    c.budget = *overrides.budget;
    c.budget_on_cli = true;
  }
  if (overrides.policy) c.policy = *overrides.policy;
  if (!overrides.backends.empty()) {
    std::vector<LlmEntry> kept;
    for (const auto& want : overrides.backends) {
      bool found = false;
      for (const auto& l : c.llms) {
        if (l.name == want) {
          kept.push_back(l);
          found = true;
        }
      }
      if (!found) errors.push_back("--backend: no [llm." + want + "] section");
    }
    c.llms = std::move(kept);
  }
  c.acquisition.policy = c.policy;
  c.acquisition.workers = c.workers;

  if (c.out.empty()) errors.push_back("no output directory: set [run] out or pass --out");
  if (c.trials < 1) errors.push_back("[run] trials must be at least 1");
  if (c.workers < 1) errors.push_back("[run] workers must be at least 1");
  if (c.subsample.n_queries < 1) errors.push_back("[split] n_queries must be at least 1");
  if (c.subsample.n_docs < 2) errors.push_back("[split] n_docs must be at least 2");
  if (c.datasets.empty()) errors.push_back("no [dataset.*] section");
  if (c.llms.empty()) errors.push_back("no [llm.*] section");
  try {
    validate(c.acquisition);
  } catch (const ConfigError& e) {
    errors.push_back(std::string("[acquisition] ") + e.what());
  }
  const auto& t = c.acquisition.train;
  if (t.inner_dim < 1) errors.push_back("[adapter] inner_dim must be at least 1");
  if (!(t.learning_rate > 0)) errors.push_back("[adapter] learning_rate must be positive");
  if (t.batch_size < 1) errors.push_back("[adapter] batch_size must be at least 1");
  if (t.epochs < 1) errors.push_back("[adapter] epochs must be at least 1");
  if (!(t.delta >= 0)) errors.push_back("[adapter] delta must be non-negative");
  if (c.compare.budgets.empty()) errors.push_back("[compare] budgets is empty");
  if (c.compare.seeds < 1) errors.push_back("[compare] seeds must be at least 1");
  const bool any_file =
      std::any_of(c.datasets.begin(), c.datasets.end(),
                  [](const auto& d) { return d.kind == DatasetKind::kFile; });
  for (const auto& l : c.llms) {
    if (l.kind == LlmKind::kSynthetic && l.spec.empty() && any_file) {
      errors.push_back("[llm." + l.name + "] a synthetic llm needs a spec to score file datasets");
    }
  }

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_run_config(in, path, overrides);
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_http(std::ostream& out, const HttpEndpointConfig& h, const std::string& api_key_env) {
  out << "url = " << h.base_url << '\n';
  if (!h.path.empty()) out << "path = " << h.path << '\n';
  out << "model = " << h.model << '\n';
  if (!api_key_env.empty()) out << "api_key_env = " << api_key_env << '\n';
  out << "timeout_ms = " << h.timeout.count() << '\n'
      << "rate = " << num(h.rate_per_second) << '\n'
      << "burst = " << num(h.burst) << '\n';
}

}  // namespace

void write_resolved_config(std::ostream& out, const RunConfig& c) {
  const auto& a = c.acquisition;
  const auto& t = a.train;
  out << "[run]\n"
      << "seed = " << c.seed << '\n'
      << "trials = " << c.trials << '\n'
      << "workers = " << c.workers << '\n';
  if (c.budget) out << "budget = " << *c.budget << '\n';
  out << "policy = " << to_string(c.policy) << '\n'
      << "rbar_policy = " << to_string(c.rbar_policy) << '\n'
      << "max_retries = " << c.retry.max_retries << '\n'
      << "backoff_ms = " << c.retry.initial_backoff.count() << '\n'
      << "backoff_multiplier = " << num(c.retry.backoff_multiplier) << "\n\n";
  out << "[split]\n"
      << "n_queries = " << c.subsample.n_queries << '\n'
      << "n_docs = " << c.subsample.n_docs << '\n'
      << "max_train_queries = " << c.max_train_queries << "\n\n";
  out << "[acquisition]\n"
      << "beta = " << num(a.beta) << '\n'
      << "lambda = " << num(a.lambda) << '\n'
      << "epsilon = " << num(a.epsilon) << '\n'
      << "round_size = " << a.round_size << '\n'
      << "docs_per_query = " << a.docs_per_query << '\n'
      << "ensemble_size = " << a.ensemble_size << '\n'
      << "query_weight_floor = " << num(a.query_weight_floor) << '\n'
      << "center_per_query = " << (a.center_per_query ? "true" : "false") << '\n'
      << "max_rounds = " << a.max_rounds << "\n\n";
  out << "[adapter]\n"
      << "inner_dim = " << t.inner_dim << '\n'
      << "combiner = " << to_string(t.combiner) << '\n'
      << "learning_rate = " << num(t.learning_rate) << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "epochs = " << t.epochs << '\n'
      << "delta = " << num(t.delta) << '\n'
      << "reward_transform = " << to_string(t.reward_transform) << "\n\n";
  out << "[compare]\nbudgets = ";
  for (std::size_t i = 0; i < c.compare.budgets.size(); ++i) {
    out << (i ? ", " : "") << num(c.compare.budgets[i]);
  }
  out << "\nseeds = " << c.compare.seeds << '\n'
      << "track_rounds = " << (c.compare.track_rounds ? "true" : "false") << "\n\n";
  if (!c.leaderboard_inputs.empty()) {
    out << "[leaderboard]\ninputs = ";
    for (std::size_t i = 0; i < c.leaderboard_inputs.size(); ++i) {
      out << (i ? ", " : "") << c.leaderboard_inputs[i].string();
    }
    out << "\n\n";
  }
  for (const auto& d : c.datasets) {
    out << "[dataset." << d.name << "]\n";
    if (d.kind == DatasetKind::kSynthetic) {
      const auto& s = d.suite;
      out << "kind = synthetic\n"
          << "seed = " << c.dataset_seed(d) << '\n'
          << "n_records = " << s.n_records << '\n'
          << "latent_dim = " << s.latent_dim << '\n'
          << "embedding_dim = " << s.embedding_dim << '\n'
          << "noise = " << num(s.embedding_noise) << '\n'
          << "sharpness = " << num(s.sharpness) << '\n'
          << "sign = " << num(s.sign) << '\n'
          << "offset = " << num(s.offset) << '\n'
          << "gain = " << num(s.gain) << '\n'
          << "llm_id = " << s.llm_id << '\n'
          << "embedding_model_id = " << s.embedding_model_id << '\n';
    } else {
      out << "kind = file\npath = " << d.path.string() << '\n';
      if (!d.embeddings.empty()) out << "embeddings = " << d.embeddings.string() << '\n';
      if (!d.query_embeddings.empty()) {
        out << "query_embeddings = " << d.query_embeddings.string() << '\n';
      }
      if (!d.doc_embeddings.empty()) out << "doc_embeddings = " << d.doc_embeddings.string() << '\n';
    }
    out << '\n';
  }
  for (const auto& l : c.llms) {
    out << "[llm." << l.name << "]\n";
    if (l.kind == LlmKind::kSynthetic) {
      out << "kind = synthetic\n";
      if (!l.spec.empty()) out << "spec = " << l.spec.string() << '\n';
    } else {
      out << "kind = http\n";
      write_http(out, l.http, l.api_key_env);
    }
    out << '\n';
  }
  for (const auto& r : c.retrievers) {
    out << "[retriever." << r.name << "]\n";
    switch (r.kind) {
      case RetrieverKindEntry::kCosine:
        out << "kind = cosine\n";
        break;
      case RetrieverKindEntry::kAdapter:
        out << "kind = adapter\ncheckpoint = " << r.checkpoint << '\n';
        break;
      case RetrieverKindEntry::kExternal:
        out << "kind = external\n";
        write_http(out, r.http, r.api_key_env);
        break;
    }
    out << "organization = " << r.organization << "\n\n";
  }
}

}  // namespace dpobench::cli
