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

// Desk-scale attacker/defender network-security stochastic game.
//
// The state is a device graph with per-device security flags. Each step both
// players submit a set of device-indexed atoms; defender atoms resolve first,
// then attacker atoms, then exogenous vulnerability events. The attacker
// receives the step reward and the defender its negation.

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "metadoar/common.hpp"

namespace metadoar::env {

enum class GraphModel { kPreferentialAttachment, kRandomRegular };

std::string_view graph_model_name(GraphModel model);
GraphModel parse_graph_model(std::string_view name);

struct EnvConfig {
  int device_count = 10;
  int steps_per_episode = 100;
  double initial_compromised_ratio = 0.4;
  // Unset means max(1, floor(0.05 * M + 0.5)).
  std::optional<int> num_attacker_owned;
  double gamma = 0.99;
  double comp_scale = 30.0;
  double work_scale = 1.0;
  double def_scale = 1.0;
  int exploit_catalog_size = 4;
  int app_catalog_size = 4;
  GraphModel graph_model = GraphModel::kPreferentialAttachment;
  std::uint64_t seed = 0;

  // Exogenous events: Poisson(events_rate) per step, each adding a
  // vulnerability with probability p_add and removing one otherwise.
  double events_rate = 0.7;
  double p_add = 0.1;
  double initial_vulnerability_prob = 0.3;
  int attachment_edges = 2;  // preferential attachment: edges per new node
  int regular_degree = 3;    // random regular graphs

  bool fast_scan = true;
  // Recorded in run metadata only; no effect on dynamics.
  double default_version = 1.0;
  int default_mode = 1;
  int default_high = 3;
  std::optional<int> max_network_size;  // unset means M + 10
  bool zero_day = false;

  int attacker_owned_count() const;
  int compromised_target_count() const;
  int resolved_max_network_size() const;
  // Throws Error naming the offending field.
  void validate() const;

  bool operator==(const EnvConfig&) const = default;
};

struct Device {
  int id = 0;
  std::uint64_t services = 0;         // bit j set => app j installed
  std::uint64_t vulnerabilities = 0;  // bit j set => exploit j applies
  bool compromised = false;
  bool attacker_owned = false;
  bool visible_to_attacker = false;
  bool visible_to_defender = true;
  bool isolated = false;
  int privilege_level = 0;
  double workload_value = 0.0;

  bool operator==(const Device&) const = default;
};

struct NetworkState {
  EnvConfig config;
  std::vector<Device> devices;
  // Sorted neighbor lists; symmetric, no self-loops.
  std::vector<std::vector<int>> adjacency;
  int step = 0;
  Rng rng;

  int device_count() const { return static_cast<int>(devices.size()); }
  int degree(int node) const {
    return static_cast<int>(adjacency[static_cast<std::size_t>(node)].size());
  }
  int max_degree() const;
  bool visible(int node, Role role) const;
  int compromised_count() const;
  bool operator==(const NetworkState&) const = default;
};

enum class ActionType {
  kNoop,
  // attacker
  kScan,
  kExploit,
  kLateralMove,
  // defender
  kPatch,
  kIsolate,
  kRestore,
};

inline constexpr int kTypesPerRole = 4;

std::string_view action_type_name(ActionType type);
bool type_allowed_for(ActionType type, Role role);
// Position of the type in its role's logit block: attacker
// {scan, exploit, lateral_move, noop}, defender {patch, isolate, restore, noop}.
int type_index(ActionType type);
ActionType type_from_index(Role role, int index);
bool requires_exploit(ActionType type);

struct ActionAtom {
  int node = 0;
  ActionType type = ActionType::kNoop;
  std::optional<int> exploit_id;
  std::optional<int> app_id;

  auto operator<=>(const ActionAtom&) const = default;
  bool operator==(const ActionAtom&) const = default;
};

std::string to_string(const ActionAtom& atom);

inline ActionAtom noop_atom(int node = 0) { return ActionAtom{node, ActionType::kNoop, {}, {}}; }

struct Observation {
  Role role = Role::kDefender;
  Eigen::VectorXd values;
};

inline constexpr int kFeaturesPerDevice = 6;
int observation_size(int device_count);

struct StepOutcome {
  double reward = 0.0;  // attacker reward; defender utility is -reward
  bool done = false;
  // Devices whose fields or neighbor lists changed during the step, sorted.
  std::vector<int> changed;
  double defender_cost = 0.0;
};

// Builds the initial state. Topology and initial compromise derive from
// config.seed; the dynamics generator is seeded with episode_seed when given.
NetworkState reset(const EnvConfig& config,
                   std::optional<std::uint64_t> episode_seed = std::nullopt);

// Sorted, duplicate-free list of atoms legal for `role` in `state`.
std::vector<ActionAtom> legal_actions(const NetworkState& state, Role role);
std::vector<ActionAtom> legal_actions_for_device(const NetworkState& state,
                                                 Role role, int node);
bool is_legal(const NetworkState& state, Role role, const ActionAtom& atom);

// Advances the state in place. Throws Error naming the first illegal atom.
StepOutcome apply_step(NetworkState& state, const std::vector<ActionAtom>& attacker,
                       const std::vector<ActionAtom>& defender);

struct StepResult {
  NetworkState state;
  double reward = 0.0;
  bool done = false;
  std::vector<int> changed;
};

StepResult step(const NetworkState& state, const std::vector<ActionAtom>& attacker,
                const std::vector<ActionAtom>& defender);

Observation observe(const NetworkState& state, Role role);

// Reward terms for a state reached after the defender spent `defender_cost`.
double holding_reward(const NetworkState& state);
double action_cost(const NetworkState& state, const ActionAtom& atom);

// R_max with |r_t| <= R_max for every reachable step.
double reward_bound(const EnvConfig& config);

// Graph helpers.
std::vector<std::vector<int>> make_graph(GraphModel model, int device_count,
                                         int attachment_edges, int regular_degree,
                                         Rng& rng);
// BFS distance-limited neighborhood of `sources` (inclusive), sorted.
std::vector<int> khop_neighborhood(const std::vector<std::vector<int>>& adjacency,
                                   const std::vector<int>& sources, int radius);
// Largest finite shortest-path distance between any two connected nodes.
int graph_diameter(const std::vector<std::vector<int>>& adjacency);

// Text snapshot, format "metadoar-state 1". See docs/formats.md.
std::string serialize(const NetworkState& state);
NetworkState deserialize(std::string_view text);

}  // namespace metadoar::env
