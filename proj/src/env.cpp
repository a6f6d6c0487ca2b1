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

#include "metadoar/env.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <sstream>

namespace metadoar::env {
namespace {

constexpr double kPatchCost = 0.1;
constexpr double kIsolateCost = 0.5;
constexpr double kRestoreBaseCost = 0.2;
constexpr double kMaxWorkload = 1.0;

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

bool has_bit(std::uint64_t mask, int bit) { return (mask >> bit) & 1ULL; }

bool adjacent_to_compromised(const NetworkState& s, int node) {
  for (int v : s.adjacency[idx(node)])
    if (s.devices[idx(v)].compromised) return true;
  return false;
}

void remove_neighbor(std::vector<int>& row, int node) {
  row.erase(std::remove(row.begin(), row.end(), node), row.end());
}

// Knuth's multiplicative method; rates here are O(1).
int poisson(Rng& rng, double rate) {
  if (rate <= 0.0) return 0;
  const double limit = std::exp(-rate);
  int k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

// Picks a uniformly random set bit (want_set) or clear bit below `width`.
std::optional<int> random_bit(Rng& rng, std::uint64_t mask, int width, bool want_set) {
  std::vector<int> candidates;
  for (int b = 0; b < width; ++b)
    if (has_bit(mask, b) == want_set) candidates.push_back(b);
  if (candidates.empty()) return std::nullopt;
  return candidates[uniform_index(rng, candidates.size())];
}

void apply_defender_atom(NetworkState& s, const ActionAtom& atom) {
  Device& d = s.devices[idx(atom.node)];
  switch (atom.type) {
    case ActionType::kPatch:
      d.vulnerabilities &= ~(1ULL << *atom.exploit_id);
      if (d.compromised && !d.attacker_owned) {
        d.compromised = false;
        d.privilege_level = 0;
      }
      break;
    case ActionType::kIsolate:
      for (int v : s.adjacency[idx(atom.node)]) remove_neighbor(s.adjacency[idx(v)], atom.node);
      s.adjacency[idx(atom.node)].clear();
      d.isolated = true;
      if (!d.attacker_owned) d.visible_to_attacker = false;
      break;
    case ActionType::kRestore:
      d.compromised = false;
      d.attacker_owned = false;
      d.privilege_level = 0;
      break;
    default:
      break;
  }
}

void apply_attacker_atom(NetworkState& s, const ActionAtom& atom) {
  Device& d = s.devices[idx(atom.node)];
  switch (atom.type) {
    case ActionType::kScan: {
      if (!d.attacker_owned) break;
      const auto& nbrs = s.adjacency[idx(atom.node)];
      if (s.config.fast_scan) {
        for (int v : nbrs) s.devices[idx(v)].visible_to_attacker = true;
      } else {
        std::vector<int> hidden;
        for (int v : nbrs)
          if (!s.devices[idx(v)].visible_to_attacker) hidden.push_back(v);
        if (!hidden.empty())
          s.devices[idx(hidden[uniform_index(s.rng, hidden.size())])].visible_to_attacker = true;
      }
      break;
    }
    case ActionType::kExploit:
      if (!d.compromised && d.visible_to_attacker && has_bit(d.vulnerabilities, *atom.exploit_id) &&
          adjacent_to_compromised(s, atom.node)) {
        d.compromised = true;
        d.privilege_level = std::max(d.privilege_level, 1);
      }
      break;
    case ActionType::kLateralMove:
      if (d.compromised && !d.attacker_owned) {
        d.attacker_owned = true;
        d.privilege_level = 2;
        d.visible_to_attacker = true;
      }
      break;
    default:
      break;
  }
}

void apply_events(NetworkState& s) {
  const int events = poisson(s.rng, s.config.events_rate);
  const int width = s.config.exploit_catalog_size;
  for (int e = 0; e < events; ++e) {
    Device& d = s.devices[uniform_index(s.rng, s.devices.size())];
    const bool add = uniform01(s.rng) < s.config.p_add;
    if (auto bit = random_bit(s.rng, d.vulnerabilities, width, !add)) {
      if (add) d.vulnerabilities |= 1ULL << *bit;
      else d.vulnerabilities &= ~(1ULL << *bit);
    }
  }
}

void check_atoms(const NetworkState& s, Role role, const std::vector<ActionAtom>& atoms) {
  std::set<ActionAtom> seen;
  for (const auto& atom : atoms) {
    if (!is_legal(s, role, atom))
      throw Error("illegal " + std::string(role_name(role)) + " atom " + to_string(atom));
    if (!seen.insert(atom).second)
      throw Error("duplicate " + std::string(role_name(role)) + " atom " + to_string(atom));
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace

std::string_view graph_model_name(GraphModel model) {
  return model == GraphModel::kPreferentialAttachment ? "preferential_attachment"
                                                       : "random_regular";
}

GraphModel parse_graph_model(std::string_view name) {
  if (name == "preferential_attachment") return GraphModel::kPreferentialAttachment;
  if (name == "random_regular") return GraphModel::kRandomRegular;
  throw Error("unknown graph_model '" + std::string(name) + "'");
}

int EnvConfig::attacker_owned_count() const {
  if (num_attacker_owned) return *num_attacker_owned;
  return std::max(1, static_cast<int>(std::floor(0.05 * device_count + 0.5)));
}

int EnvConfig::compromised_target_count() const {
  const auto rounded = static_cast<int>(std::llround(initial_compromised_ratio * device_count));
  return std::min(device_count, std::max(attacker_owned_count(), rounded));
}

int EnvConfig::resolved_max_network_size() const {
  return max_network_size.value_or(device_count + 10);
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& constraint) {
    throw Error("env." + field + ": " + constraint);
  };
  if (device_count < 1) fail("device_count", "must be a positive integer");
  if (steps_per_episode < 1) fail("steps_per_episode", "must be a positive integer");
  if (!(initial_compromised_ratio >= 0.0 && initial_compromised_ratio <= 1.0))
    fail("initial_compromised_ratio", "must lie in [0, 1]");
  const int owned = attacker_owned_count();
  if (owned < 0 || owned > device_count)
    fail("num_attacker_owned", "must lie in [0, device_count]");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma", "must lie in (0, 1)");
  if (!(comp_scale > 0.0)) fail("comp_scale", "must be > 0");
  if (!(work_scale > 0.0)) fail("work_scale", "must be > 0");
  if (!(def_scale > 0.0)) fail("def_scale", "must be > 0");
  if (exploit_catalog_size < 1 || exploit_catalog_size > 64)
    fail("exploit_catalog_size", "must lie in [1, 64]");
  if (app_catalog_size < 1 || app_catalog_size > 64)
    fail("app_catalog_size", "must lie in [1, 64]");
  if (!(events_rate >= 0.0)) fail("events_rate", "must be >= 0");
  if (!(p_add >= 0.0 && p_add <= 1.0)) fail("p_add", "must lie in [0, 1]");
  if (!(initial_vulnerability_prob >= 0.0 && initial_vulnerability_prob <= 1.0))
    fail("initial_vulnerability_prob", "must lie in [0, 1]");
  if (attachment_edges < 1) fail("attachment_edges", "must be a positive integer");
  if (graph_model == GraphModel::kRandomRegular) {
    if (regular_degree < 0 || (regular_degree >= device_count && regular_degree > 0))
      fail("regular_degree", "must lie in [0, device_count)");
    if ((static_cast<long long>(regular_degree) * device_count) % 2 != 0)
      fail("regular_degree", "device_count * regular_degree must be even");
  }
  if (resolved_max_network_size() < device_count)
    fail("max_network_size", "must be >= device_count");
  if (zero_day) fail("zero_day", "zero-day exploits are not modeled");
}

int NetworkState::max_degree() const {
  int best = 0;
  for (const auto& row : adjacency) best = std::max(best, static_cast<int>(row.size()));
  return best;
}

bool NetworkState::visible(int node, Role role) const {
  const Device& d = devices[idx(node)];
  return role == Role::kAttacker ? d.visible_to_attacker : d.visible_to_defender;
}

int NetworkState::compromised_count() const {
  return static_cast<int>(
      std::count_if(devices.begin(), devices.end(), [](const Device& d) { return d.compromised; }));
}

std::string_view action_type_name(ActionType type) {
  switch (type) {
    case ActionType::kNoop: return "noop";
    case ActionType::kScan: return "scan";
    case ActionType::kExploit: return "exploit";
    case ActionType::kLateralMove: return "lateral_move";
    case ActionType::kPatch: return "patch";
    case ActionType::kIsolate: return "isolate";
    case ActionType::kRestore: return "restore";
  }
  return "?";
}

bool type_allowed_for(ActionType type, Role role) {
  switch (type) {
    case ActionType::kNoop: return true;
    case ActionType::kScan:
    case ActionType::kExploit:
    case ActionType::kLateralMove: return role == Role::kAttacker;
    case ActionType::kPatch:
    case ActionType::kIsolate:
    case ActionType::kRestore: return role == Role::kDefender;
  }
  return false;
}

int type_index(ActionType type) {
  switch (type) {
    case ActionType::kScan:
    case ActionType::kPatch: return 0;
    case ActionType::kExploit:
    case ActionType::kIsolate: return 1;
    case ActionType::kLateralMove:
    case ActionType::kRestore: return 2;
    case ActionType::kNoop: return 3;
  }
  return 3;
}

ActionType type_from_index(Role role, int index) {
  static constexpr ActionType kAttacker[] = {ActionType::kScan, ActionType::kExploit,
                                             ActionType::kLateralMove, ActionType::kNoop};
  static constexpr ActionType kDefender[] = {ActionType::kPatch, ActionType::kIsolate,
                                             ActionType::kRestore, ActionType::kNoop};
  if (index < 0 || index >= kTypesPerRole) throw Error("type_from_index: index out of range");
  return role == Role::kAttacker ? kAttacker[index] : kDefender[index];
}

bool requires_exploit(ActionType type) {
  return type == ActionType::kExploit || type == ActionType::kPatch;
}

std::string to_string(const ActionAtom& atom) {
  std::ostringstream os;
  os << "(node=" << atom.node << ", " << action_type_name(atom.type);
  if (atom.exploit_id) os << ", exploit=" << *atom.exploit_id;
  if (atom.app_id) os << ", app=" << *atom.app_id;
  os << ")";
  return os.str();
}

int observation_size(int device_count) { return kFeaturesPerDevice * device_count + 1; }

NetworkState reset(const EnvConfig& config, std::optional<std::uint64_t> episode_seed) {
  config.validate();
  NetworkState s;
  s.config = config;
  const int m = config.device_count;
  Rng topo(mix_seed(config.seed, 1));
  s.adjacency = make_graph(config.graph_model, m, config.attachment_edges,
                           config.regular_degree, topo);
  s.devices.resize(idx(m));
  Rng init(mix_seed(config.seed, 2));
  for (int i = 0; i < m; ++i) {
    Device& d = s.devices[idx(i)];
    d.id = i;
    for (int a = 0; a < config.app_catalog_size; ++a)
      if (uniform01(init) < 0.5) d.services |= 1ULL << a;
    for (int e = 0; e < config.exploit_catalog_size; ++e)
      if (uniform01(init) < config.initial_vulnerability_prob) d.vulnerabilities |= 1ULL << e;
    d.workload_value = uniform01(init) * kMaxWorkload;
  }
  std::vector<int> order(idx(m));
  for (int i = 0; i < m; ++i) order[idx(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(init, i)]);
  const int owned = config.attacker_owned_count();
  const int compromised = config.compromised_target_count();
  for (int r = 0; r < compromised; ++r) {
    Device& d = s.devices[idx(order[idx(r)])];
    d.compromised = true;
    d.privilege_level = 1;
    if (r < owned) {
      d.attacker_owned = true;
      d.privilege_level = 2;
      d.visible_to_attacker = true;
    }
  }
  s.step = 0;
  s.rng.seed(episode_seed.value_or(mix_seed(config.seed, 3)));
  return s;
}

std::vector<ActionAtom> legal_actions_for_device(const NetworkState& s, Role role, int node) {
  std::vector<ActionAtom> out;
  if (node < 0 || node >= s.device_count() || !s.visible(node, role)) return out;
  const Device& d = s.devices[idx(node)];
  if (role == Role::kAttacker) {
    if (d.attacker_owned) out.push_back({node, ActionType::kScan, {}, {}});
    if (!d.compromised && adjacent_to_compromised(s, node))
      for (int e = 0; e < s.config.exploit_catalog_size; ++e)
        out.push_back({node, ActionType::kExploit, e, {}});
    if (d.compromised && !d.attacker_owned) out.push_back({node, ActionType::kLateralMove, {}, {}});
  } else {
    for (int e = 0; e < s.config.exploit_catalog_size; ++e)
      if (has_bit(d.vulnerabilities, e)) out.push_back({node, ActionType::kPatch, e, {}});
    if (!s.adjacency[idx(node)].empty()) out.push_back({node, ActionType::kIsolate, {}, {}});
    if (d.compromised) out.push_back({node, ActionType::kRestore, {}, {}});
  }
  out.push_back(noop_atom(node));
  return out;
}

std::vector<ActionAtom> legal_actions(const NetworkState& s, Role role) {
  std::vector<ActionAtom> out;
  for (int i = 0; i < s.device_count(); ++i) {
    auto dev = legal_actions_for_device(s, role, i);
    out.insert(out.end(), dev.begin(), dev.end());
  }
  out.push_back(noop_atom(0));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool is_legal(const NetworkState& s, Role role, const ActionAtom& atom) {
  if (atom.node < 0 || atom.node >= s.device_count()) return false;
  if (!type_allowed_for(atom.type, role)) return false;
  if (requires_exploit(atom.type) != atom.exploit_id.has_value()) return false;
  if (atom.exploit_id && (*atom.exploit_id < 0 || *atom.exploit_id >= s.config.exploit_catalog_size))
    return false;
  if (atom.app_id) return false;
  if (atom.type == ActionType::kNoop) return true;
  const auto dev = legal_actions_for_device(s, role, atom.node);
  return std::find(dev.begin(), dev.end(), atom) != dev.end();
}

double action_cost(const NetworkState& s, const ActionAtom& atom) {
  switch (atom.type) {
    case ActionType::kPatch: return kPatchCost;
    case ActionType::kIsolate: return kIsolateCost;
    case ActionType::kRestore: return kRestoreBaseCost + s.devices[idx(atom.node)].workload_value;
    default: return 0.0;
  }
}

double holding_reward(const NetworkState& s) {
  double owned_value = 0.0;
  for (const auto& d : s.devices)
    if (d.attacker_owned) owned_value += d.workload_value;
  return s.config.comp_scale * static_cast<double>(s.compromised_count()) /
             static_cast<double>(s.device_count()) +
         owned_value;
}

double reward_bound(const EnvConfig& c) {
  const double m = c.device_count;
  const double per_device_cost =
      kPatchCost * c.exploit_catalog_size + kIsolateCost + kRestoreBaseCost + kMaxWorkload;
  return c.comp_scale + m * kMaxWorkload + c.def_scale * c.work_scale * m * per_device_cost;
}

StepOutcome apply_step(NetworkState& s, const std::vector<ActionAtom>& attacker,
                       const std::vector<ActionAtom>& defender) {
  if (s.step >= s.config.steps_per_episode) throw Error("step: episode already finished");
  check_atoms(s, Role::kDefender, defender);
  check_atoms(s, Role::kAttacker, attacker);

  const std::vector<Device> before = s.devices;
  const auto adjacency_before = s.adjacency;

  std::vector<ActionAtom> def_sorted = defender, att_sorted = attacker;
  std::sort(def_sorted.begin(), def_sorted.end());
  std::sort(att_sorted.begin(), att_sorted.end());

  StepOutcome out;
  std::vector<bool> defended(s.devices.size(), false);
  for (const auto& atom : def_sorted) {
    if (atom.type == ActionType::kNoop) continue;
    out.defender_cost += action_cost(s, atom);
    apply_defender_atom(s, atom);
    defended[idx(atom.node)] = true;
  }
  for (const auto& atom : att_sorted) {
    if (atom.type == ActionType::kNoop || defended[idx(atom.node)]) continue;
    apply_attacker_atom(s, atom);
  }
  apply_events(s);

  s.step += 1;
  out.done = s.step == s.config.steps_per_episode;
  out.reward = holding_reward(s) + s.config.def_scale * s.config.work_scale * out.defender_cost;
  for (int i = 0; i < s.device_count(); ++i)
    if (!(s.devices[idx(i)] == before[idx(i)]) || s.adjacency[idx(i)] != adjacency_before[idx(i)])
      out.changed.push_back(i);
  return out;
}

StepResult step(const NetworkState& state, const std::vector<ActionAtom>& attacker,
                const std::vector<ActionAtom>& defender) {
  StepResult r{state, 0.0, false, {}};
  auto outcome = apply_step(r.state, attacker, defender);
  r.reward = outcome.reward;
  r.done = outcome.done;
  r.changed = std::move(outcome.changed);
  return r;
}

Observation observe(const NetworkState& s, Role role) {
  const int m = s.device_count();
  Observation o{role, Eigen::VectorXd::Zero(observation_size(m))};
  const double max_deg = std::max(1, s.max_degree());
  const double catalog = s.config.exploit_catalog_size;
  for (int i = 0; i < m; ++i) {
    if (!s.visible(i, role)) continue;
    const Device& d = s.devices[idx(i)];
    auto block = o.values.segment(kFeaturesPerDevice * i, kFeaturesPerDevice);
    block[0] = 1.0;
    block[1] = d.compromised ? 1.0 : 0.0;
    block[3] = std::popcount(d.vulnerabilities) / catalog;
    block[5] = s.degree(i) / max_deg;
    if (role == Role::kAttacker) {
      block[2] = d.attacker_owned ? 1.0 : 0.0;
      block[4] = d.privilege_level / 2.0;
    } else {
      block[2] = d.isolated ? 1.0 : 0.0;
      block[4] = d.workload_value;
    }
  }
  o.values[kFeaturesPerDevice * m] =
      static_cast<double>(s.step) / static_cast<double>(s.config.steps_per_episode);
  return o;
}

// --- snapshots -------------------------------------------------------------

std::string serialize(const NetworkState& s) {
  const EnvConfig& c = s.config;
  std::ostringstream os;
  os << "metadoar-state 1\n";
  os << "config device_count=" << c.device_count << " steps_per_episode=" << c.steps_per_episode
     << " initial_compromised_ratio=" << fmt_double(c.initial_compromised_ratio)
     << " num_attacker_owned=" << (c.num_attacker_owned ? *c.num_attacker_owned : -1)
     << " gamma=" << fmt_double(c.gamma) << " comp_scale=" << fmt_double(c.comp_scale)
     << " work_scale=" << fmt_double(c.work_scale) << " def_scale=" << fmt_double(c.def_scale)
     << " exploit_catalog_size=" << c.exploit_catalog_size
     << " app_catalog_size=" << c.app_catalog_size
     << " graph_model=" << graph_model_name(c.graph_model) << " seed=" << c.seed
     << " events_rate=" << fmt_double(c.events_rate) << " p_add=" << fmt_double(c.p_add)
     << " initial_vulnerability_prob=" << fmt_double(c.initial_vulnerability_prob)
     << " attachment_edges=" << c.attachment_edges << " regular_degree=" << c.regular_degree
     << " fast_scan=" << (c.fast_scan ? 1 : 0) << " default_version=" << fmt_double(c.default_version)
     << " default_mode=" << c.default_mode << " default_high=" << c.default_high
     << " max_network_size=" << (c.max_network_size ? *c.max_network_size : -1)
     << " zero_day=" << (c.zero_day ? 1 : 0) << "\n";
  os << "step " << s.step << "\n";
  os << "rng " << s.rng << "\n";
  for (const auto& d : s.devices) {
    os << "device " << d.id << ' ' << std::hex << d.services << ' ' << d.vulnerabilities << std::dec
       << ' ' << d.compromised << ' ' << d.attacker_owned << ' ' << d.visible_to_attacker << ' '
       << d.visible_to_defender << ' ' << d.isolated << ' ' << d.privilege_level << ' '
       << fmt_double(d.workload_value) << "\n";
  }
  for (std::size_t i = 0; i < s.adjacency.size(); ++i) {
    os << "adj " << i << ' ' << s.adjacency[i].size();
    for (int v : s.adjacency[i]) os << ' ' << v;
    os << "\n";
  }
  os << "end\n";
  return os.str();
}

NetworkState deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error("state snapshot line " + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() {
    if (!std::getline(is, line)) fail("unexpected end of snapshot");
    ++line_no;
  };
  next_line();
  if (line != "metadoar-state 1") fail("unsupported header '" + line + "'");

  NetworkState s;
  next_line();
  {
    std::istringstream ls(line);
    std::string tag, kv;
    ls >> tag;
    if (tag != "config") fail("expected config");
    EnvConfig& c = s.config;
    while (ls >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail("malformed config token '" + kv + "'");
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      auto num = [&] { return std::strtod(val.c_str(), nullptr); };
      auto integer = [&] { return std::stoll(val); };
      if (key == "device_count") c.device_count = static_cast<int>(integer());
      else if (key == "steps_per_episode") c.steps_per_episode = static_cast<int>(integer());
      else if (key == "initial_compromised_ratio") c.initial_compromised_ratio = num();
      else if (key == "num_attacker_owned") {
        const auto v = integer();
        c.num_attacker_owned = v < 0 ? std::nullopt : std::optional<int>(static_cast<int>(v));
      } else if (key == "gamma") c.gamma = num();
      else if (key == "comp_scale") c.comp_scale = num();
      else if (key == "work_scale") c.work_scale = num();
      else if (key == "def_scale") c.def_scale = num();
      else if (key == "exploit_catalog_size") c.exploit_catalog_size = static_cast<int>(integer());
      else if (key == "app_catalog_size") c.app_catalog_size = static_cast<int>(integer());
      else if (key == "graph_model") c.graph_model = parse_graph_model(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "events_rate") c.events_rate = num();
      else if (key == "p_add") c.p_add = num();
      else if (key == "initial_vulnerability_prob") c.initial_vulnerability_prob = num();
      else if (key == "attachment_edges") c.attachment_edges = static_cast<int>(integer());
      else if (key == "regular_degree") c.regular_degree = static_cast<int>(integer());
      else if (key == "fast_scan") c.fast_scan = integer() != 0;
      else if (key == "default_version") c.default_version = num();
      else if (key == "default_mode") c.default_mode = static_cast<int>(integer());
      else if (key == "default_high") c.default_high = static_cast<int>(integer());
      else if (key == "max_network_size") {
        const auto v = integer();
        c.max_network_size = v < 0 ? std::nullopt : std::optional<int>(static_cast<int>(v));
      } else if (key == "zero_day") c.zero_day = integer() != 0;
      else fail("unknown config key '" + key + "'");
    }
  }
  next_line();
  if (std::sscanf(line.c_str(), "step %d", &s.step) != 1) fail("expected step");
  next_line();
  if (line.rfind("rng ", 0) != 0) fail("expected rng");
  {
    std::istringstream ls(line.substr(4));
    ls >> s.rng;
    if (!ls) fail("malformed rng state");
  }
  const int m = s.config.device_count;
  s.devices.resize(idx(std::max(m, 0)));
  s.adjacency.resize(idx(std::max(m, 0)));
  for (int i = 0; i < m; ++i) {
    next_line();
    std::istringstream ls(line);
    std::string tag, workload;
    Device& d = s.devices[idx(i)];
    ls >> tag >> d.id >> std::hex >> d.services >> d.vulnerabilities >> std::dec >> d.compromised >>
        d.attacker_owned >> d.visible_to_attacker >> d.visible_to_defender >> d.isolated >>
        d.privilege_level >> workload;
    if (!ls || tag != "device" || d.id != i) fail("malformed device record");
    d.workload_value = std::strtod(workload.c_str(), nullptr);
  }
  for (int i = 0; i < m; ++i) {
    next_line();
    std::istringstream ls(line);
    std::string tag;
    int id = -1;
    std::size_t n = 0;
    ls >> tag >> id >> n;
    if (!ls || tag != "adj" || id != i) fail("malformed adjacency record");
    auto& row = s.adjacency[idx(i)];
    row.resize(n);
    for (auto& v : row) ls >> v;
    if (!ls) fail("malformed adjacency record");
  }
  next_line();
  if (line != "end") fail("expected end");
  return s;
}

}  // namespace metadoar::env
