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

#include <algorithm>
#include <deque>
#include <set>
#include <utility>

#include "metadoar/env.hpp"

namespace metadoar::env {
namespace {

using Adjacency = std::vector<std::vector<int>>;

void add_edge(Adjacency& adj, int a, int b) {
  adj[static_cast<std::size_t>(a)].push_back(b);
  adj[static_cast<std::size_t>(b)].push_back(a);
}

// Barabasi-Albert growth seeded with a clique on the first m + 1 nodes.
Adjacency preferential_attachment(int n, int m, Rng& rng) {
  Adjacency adj(static_cast<std::size_t>(n));
  const int core = std::min(n, m + 1);
  std::vector<int> endpoints;  // node repeated once per incident edge
  for (int a = 0; a < core; ++a) {
    for (int b = a + 1; b < core; ++b) {
      add_edge(adj, a, b);
      endpoints.push_back(a);
      endpoints.push_back(b);
    }
  }
  for (int node = core; node < n; ++node) {
    std::set<int> targets;
    const int want = std::min(m, node);
    while (static_cast<int>(targets.size()) < want) {
      int pick;
      if (endpoints.empty()) {
        pick = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(node)));
      } else {
        pick = endpoints[uniform_index(rng, endpoints.size())];
      }
      targets.insert(pick);
    }
    for (int t : targets) {
      add_edge(adj, node, t);
      endpoints.push_back(node);
      endpoints.push_back(t);
    }
  }
  return adj;
}

// Configuration model with whole-graph rejection of loops and multi-edges.
Adjacency random_regular(int n, int d, Rng& rng) {
  if (d == 0) return Adjacency(static_cast<std::size_t>(n));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(n * d));
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < d; ++j) stubs.push_back(v);
    for (std::size_t i = stubs.size(); i > 1; --i)
      std::swap(stubs[i - 1], stubs[uniform_index(rng, i)]);
    std::set<std::pair<int, int>> edges;
    bool ok = true;
    for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
      int a = stubs[i], b = stubs[i + 1];
      if (a == b) { ok = false; break; }
      if (a > b) std::swap(a, b);
      if (!edges.insert({a, b}).second) { ok = false; break; }
    }
    if (!ok) continue;
    Adjacency adj(static_cast<std::size_t>(n));
    for (auto [a, b] : edges) add_edge(adj, a, b);
    return adj;
  }
  throw Error("random_regular: failed to sample a simple graph");
}

}  // namespace

Adjacency make_graph(GraphModel model, int device_count, int attachment_edges,
                     int regular_degree, Rng& rng) {
  Adjacency adj = model == GraphModel::kPreferentialAttachment
                      ? preferential_attachment(device_count, attachment_edges, rng)
                      : random_regular(device_count, regular_degree, rng);
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

std::vector<int> khop_neighborhood(const Adjacency& adjacency,
                                   const std::vector<int>& sources, int radius) {
  const int n = static_cast<int>(adjacency.size());
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::deque<int> frontier;
  for (int s : sources) {
    if (s < 0 || s >= n) throw Error("khop_neighborhood: node out of range");
    if (dist[static_cast<std::size_t>(s)] < 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop_front();
    const int du = dist[static_cast<std::size_t>(u)];
    if (du >= radius) continue;
    for (int v : adjacency[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = du + 1;
        frontier.push_back(v);
      }
    }
  }
  std::vector<int> out;
  for (int v = 0; v < n; ++v)
    if (dist[static_cast<std::size_t>(v)] >= 0) out.push_back(v);
  return out;
}

int graph_diameter(const Adjacency& adjacency) {
  const int n = static_cast<int>(adjacency.size());
  int best = 0;
  std::vector<int> dist(static_cast<std::size_t>(n));
  std::deque<int> frontier;
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[static_cast<std::size_t>(s)] = 0;
    frontier.assign(1, s);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      for (int v : adjacency[static_cast<std::size_t>(u)]) {
        if (dist[static_cast<std::size_t>(v)] < 0) {
          dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
          best = std::max(best, dist[static_cast<std::size_t>(v)]);
          frontier.push_back(v);
        }
      }
    }
  }
  return best;
}

}  // namespace metadoar::env
