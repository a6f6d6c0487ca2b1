// Copyright 2026 The MetaDOAR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "metadoar/qcache.hpp"

#include <bit>
#include <cmath>

namespace metadoar::qcache {

CacheKey make_key(std::uint64_t state_key, const env::ActionAtom& atom) {
  return CacheKey{state_key, atom.node, atom.type, atom.exploit_id, atom.app_id};
}

std::size_t CacheKeyHash::operator()(const CacheKey& key) const {
  std::uint64_t h = fnv1a_u64(key.state_key, 0xCBF29CE484222325ULL);
  h = fnv1a_u64(static_cast<std::uint64_t>(key.node), h);
  h = fnv1a_u64(static_cast<std::uint64_t>(key.action_type), h);
  h = fnv1a_u64(key.exploit_id ? static_cast<std::uint64_t>(*key.exploit_id) : ~0ULL, h);
  h = fnv1a_u64(key.app_id ? static_cast<std::uint64_t>(*key.app_id) : ~0ULL, h);
  return static_cast<std::size_t>(h);
}

std::uint64_t state_key(const Eigen::VectorXd& h, std::optional<int> decimals) {
  if (!h.allFinite()) throw Error("state_key: non-finite state embedding");
  if (decimals && *decimals < 0) throw Error("state_key: decimals must be >= 0");
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  const double scale = decimals ? std::pow(10.0, *decimals) : 1.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    std::uint64_t word;
    if (decimals) {
      word = static_cast<std::uint64_t>(std::llround(h[i] * scale));
    } else {
      const double v = h[i] == 0.0 ? 0.0 : h[i];
      word = std::bit_cast<std::uint64_t>(v);
    }
    hash = fnv1a_u64(word, hash);
  }
  return hash;
}

void CacheConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& constraint) {
    throw Error("cache." + field + ": " + constraint);
  };
  if (capacity < 1) fail("capacity", "must be a positive integer");
  if (ttl && *ttl < 0) fail("ttl", "must be >= 0");
  if (flush_interval && *flush_interval < 1) fail("flush_interval", "must be a positive integer");
  if (!(reeval_prob >= 0.0 && reeval_prob <= 1.0)) fail("reeval_prob", "must lie in [0, 1]");
  if (khop_radius < 0) fail("khop_radius", "must be >= 0");
  if (quantization_decimals && (*quantization_decimals < 0 || *quantization_decimals > 15))
    fail("quantization_decimals", "must lie in [0, 15]");
}

QCache::QCache(CacheConfig config) : config_(config), rng_(mix_seed(config.seed, 0x51CAC4E)) {
  config_.validate();
}

void QCache::erase(List::iterator it) {
  auto node_it = by_node_.find(it->key.node);
  if (node_it != by_node_.end()) {
    node_it->second.erase(it->key);
    if (node_it->second.empty()) by_node_.erase(node_it);
  }
  map_.erase(it->key);
  lru_.erase(it);
}

std::optional<double> QCache::lookup(const CacheKey& key) {
  auto found = map_.find(key);
  if (found == map_.end()) {
    ++counters_.misses;
    return std::nullopt;
  }
  auto it = found->second;
  if (config_.ttl && cache_step_ - it->inserted_at > *config_.ttl) {
    erase(it);
    ++counters_.expirations;
    ++counters_.misses;
    return std::nullopt;
  }
  if (config_.reeval_prob > 0.0 && uniform01(rng_) < config_.reeval_prob) {
    ++counters_.forced_reevals;
    ++counters_.misses;
    return std::nullopt;
  }
  lru_.splice(lru_.begin(), lru_, it);
  ++it->uses;
  ++counters_.hits;
  return it->q;
}

void QCache::insert(const CacheKey& key, double q) {
  if (!std::isfinite(q)) throw Error("QCache::insert: non-finite value");
  ++counters_.inserts;
  auto found = map_.find(key);
  if (found != map_.end()) {
    auto it = found->second;
    it->q = q;
    it->inserted_at = cache_step_;
    it->uses = 0;
    lru_.splice(lru_.begin(), lru_, it);
    return;
  }
  lru_.push_front(Entry{key, q, cache_step_, 0});
  map_.emplace(key, lru_.begin());
  by_node_[key.node].insert(key);
  if (map_.size() > config_.capacity) {
    erase(std::prev(lru_.end()));
    ++counters_.evictions;
  }
}

std::size_t QCache::invalidate_khop(const std::vector<int>& changed,
                                    const std::vector<std::vector<int>>& adjacency, int radius) {
  if (radius < 0) throw Error("invalidate_khop: radius must be >= 0");
  if (changed.empty() || map_.empty()) return 0;
  std::size_t removed = 0;
  for (int node : env::khop_neighborhood(adjacency, changed, radius)) {
    auto node_it = by_node_.find(node);
    if (node_it == by_node_.end()) continue;
    const std::vector<CacheKey> keys(node_it->second.begin(), node_it->second.end());
    for (const auto& key : keys) {
      erase(map_.at(key));
      ++removed;
    }
  }
  counters_.invalidations += static_cast<long long>(removed);
  return removed;
}

void QCache::tick() {
  ++cache_step_;
  if (config_.flush_interval && cache_step_ % *config_.flush_interval == 0) {
    clear();
    ++counters_.flushes;
  }
}

void QCache::clear() {
  lru_.clear();
  map_.clear();
  by_node_.clear();
}

std::optional<long long> QCache::uses(const CacheKey& key) const {
  auto found = map_.find(key);
  if (found == map_.end()) return std::nullopt;
  return found->second->uses;
}

std::vector<CacheKey> QCache::recency_order() const {
  std::vector<CacheKey> out;
  out.reserve(lru_.size());
  for (const auto& e : lru_) out.push_back(e.key);
  return out;
}

}  // namespace metadoar::qcache
