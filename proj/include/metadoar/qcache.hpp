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

// LRU store of critic evaluations keyed by a quantized state projection and
// the local action identifiers of one atom.
//
// Staleness is bounded four ways: entries expire `ttl` cache steps after
// insertion, the whole cache is flushed every `flush_interval` steps, a
// fraction `reeval_prob` of would-be hits is reported as a miss so that the
// caller recomputes, and entries on devices within `khop_radius` hops of a
// changed device are dropped.

#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "metadoar/common.hpp"
#include "metadoar/env.hpp"

namespace metadoar::qcache {

struct CacheKey {
  std::uint64_t state_key = 0;
  int node = 0;
  env::ActionType action_type = env::ActionType::kNoop;
  std::optional<int> exploit_id;
  std::optional<int> app_id;

  bool operator==(const CacheKey&) const = default;
};

CacheKey make_key(std::uint64_t state_key, const env::ActionAtom& atom);

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& key) const;
};

// Rounds every coordinate to `decimals` places (half away from zero) and
// FNV-1a hashes the resulting int64 tuple, little-endian. With no decimals
// the raw IEEE-754 bit patterns are hashed (full precision; -0 folded to +0).
// Throws Error on non-finite input.
std::uint64_t state_key(const Eigen::VectorXd& h, std::optional<int> decimals);

struct CacheConfig {
  std::size_t capacity = 50'000;
  std::optional<long long> ttl = 50;             // unset: entries never expire
  std::optional<long long> flush_interval = 200;  // unset: never flush
  double reeval_prob = 0.01;
  int khop_radius = 1;
  std::optional<int> quantization_decimals = 3;  // unset: full precision
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const CacheConfig&) const = default;
};

struct CacheCounters {
  long long hits = 0;
  long long misses = 0;
  long long forced_reevals = 0;
  long long invalidations = 0;  // entries removed by k-hop invalidation
  long long flushes = 0;
  long long evictions = 0;
  long long expirations = 0;
  long long inserts = 0;
};

class QCache {
 public:
  explicit QCache(CacheConfig config = {});

  // Hit refreshes recency and bumps the use counter. Expired entries are
  // removed and reported as misses; a fired re-evaluation coin is a miss that
  // keeps the entry for the caller to overwrite.
  std::optional<double> lookup(const CacheKey& key);
  // Requires a finite q. Evicts the least recently used entry when full.
  void insert(const CacheKey& key, double q);
  // Removes every entry whose node lies within `radius` BFS hops of a changed
  // node on `adjacency`. Returns the number of entries removed.
  std::size_t invalidate_khop(const std::vector<int>& changed,
                              const std::vector<std::vector<int>>& adjacency, int radius);
  std::size_t invalidate_khop(const std::vector<int>& changed,
                              const std::vector<std::vector<int>>& adjacency) {
    return invalidate_khop(changed, adjacency, config_.khop_radius);
  }
  // Advances the cache clock; flushes when it reaches a multiple of
  // flush_interval.
  void tick();
  void clear();

  std::size_t size() const { return map_.size(); }
  bool contains(const CacheKey& key) const { return map_.count(key) != 0; }
  long long cache_step() const { return cache_step_; }
  const CacheConfig& config() const { return config_; }
  const CacheCounters& counters() const { return counters_; }
  // Uses recorded for a key, or nullopt when absent.
  std::optional<long long> uses(const CacheKey& key) const;
  // Keys from most to least recently used.
  std::vector<CacheKey> recency_order() const;

 private:
  struct Entry {
    CacheKey key;
    double q = 0.0;
    long long inserted_at = 0;
    long long uses = 0;
  };
  using List = std::list<Entry>;

  void erase(List::iterator it);

  CacheConfig config_;
  List lru_;  // front = most recently used
  std::unordered_map<CacheKey, List::iterator, CacheKeyHash> map_;
  std::unordered_map<int, std::unordered_set<CacheKey, CacheKeyHash>> by_node_;
  long long cache_step_ = 0;
  CacheCounters counters_;
  Rng rng_;
};

}  // namespace metadoar::qcache
