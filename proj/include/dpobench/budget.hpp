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
#include <limits>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dpobench {

// (query_id, doc_id).
using QueryDocPair = std::pair<std::string, std::string>;

// Counts DPO evaluations against a fixed budget. A pair is reserved before
// its backend calls, committed when its DPO value lands and released when
// the evaluation fails, so consumed + pending never exceeds the total and a
// pair is charged at most once. Thread-safe.
class BudgetLedger {
 public:
  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  struct RoundEntry {
    std::size_t round = 0;
    std::size_t requested = 0;
    std::size_t completed = 0;
  };

  explicit BudgetLedger(std::size_t total = kUnlimited) : total_(total) {}

  std::size_t total() const { return total_; }
  std::size_t consumed() const;
  std::size_t remaining() const;

  // False if the pair is already charged or in flight. Throws BudgetExhausted
  // when no slot is left.
  bool reserve(const QueryDocPair& pair);
  void commit(const QueryDocPair& pair);
  void release(const QueryDocPair& pair);

  bool charged(const QueryDocPair& pair) const;
  std::vector<QueryDocPair> charged_pairs() const;

  void log_round(std::size_t round, std::size_t requested, std::size_t completed);
  std::vector<RoundEntry> rounds() const;

 private:
  std::size_t total_;
  mutable std::mutex mu_;
  std::set<QueryDocPair> charged_;
  std::set<QueryDocPair> pending_;
  std::vector<RoundEntry> rounds_;
};

}  // namespace dpobench
