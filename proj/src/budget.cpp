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

#include "dpobench/budget.hpp"

#include "dpobench/errors.hpp"

namespace dpobench {

std::size_t BudgetLedger::consumed() const {
  std::lock_guard lock(mu_);
  return charged_.size();
}

std::size_t BudgetLedger::remaining() const {
  std::lock_guard lock(mu_);
  if (total_ == kUnlimited) return kUnlimited;
  return total_ - charged_.size() - pending_.size();
}

bool BudgetLedger::reserve(const QueryDocPair& pair) {
  std::lock_guard lock(mu_);
  if (charged_.count(pair) || pending_.count(pair)) return false;
  if (total_ != kUnlimited && charged_.size() + pending_.size() >= total_) {
    throw BudgetExhausted("DPO budget of " + std::to_string(total_) + " evaluations exhausted");
  }
  pending_.insert(pair);
  return true;
}

void BudgetLedger::commit(const QueryDocPair& pair) {
  std::lock_guard lock(mu_);
  if (pending_.erase(pair) == 0) {
    throw Error("commit of a pair that was never reserved: " + pair.first + "/" + pair.second);
  }
  charged_.insert(pair);
}

void BudgetLedger::release(const QueryDocPair& pair) {
  std::lock_guard lock(mu_);
  pending_.erase(pair);
}

bool BudgetLedger::charged(const QueryDocPair& pair) const {
  std::lock_guard lock(mu_);
  return charged_.count(pair) != 0;
}

std::vector<QueryDocPair> BudgetLedger::charged_pairs() const {
  std::lock_guard lock(mu_);
  return {charged_.begin(), charged_.end()};
}

void BudgetLedger::log_round(std::size_t round, std::size_t requested, std::size_t completed) {
  std::lock_guard lock(mu_);
  rounds_.push_back({round, requested, completed});
}

std::vector<BudgetLedger::RoundEntry> BudgetLedger::rounds() const {
  std::lock_guard lock(mu_);
  return rounds_;
}

}  // namespace dpobench
