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

// Approximate best responses: a deterministic actor and a TD critic trained
// against a fixed opponent mixture.
//
// Actions live in a fixed-width space of M + 4 + E coordinates: a one-hot
// device block, a one-hot action-type block (per-role type index) and a
// one-hot exploit block. The actor emits a tanh vector in that space. For
// each allowed device, legal atoms are ranked by their dot product with the
// (noisy) actor output, the greedy_k best are scored by the critic, and one
// atom per device is kept.
//
// Policy networks read the device blocks of the observation only; the step
// fraction is dropped so a policy is stationary.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "metadoar/common.hpp"
#include "metadoar/env.hpp"
#include "metadoar/meta.hpp"
#include "metadoar/nn.hpp"
#include "metadoar/qcache.hpp"
#include "metadoar/ring_buffer.hpp"

namespace metadoar::br {

struct BrConfig {
  int hidden = 128;
  double actor_lr = 1e-3;
  double critic_lr = 1e-2;
  double reward_scale = 1.0;  // applied after division by R_max
  double tau = 0.01;
  double max_grad_norm = 0.5;
  double noise_std = 0.1;
  int greedy_k = 5;
  double greedy_tau = 0.5;
  std::size_t replay_capacity = 100'000;
  int batch_size = 32;
  int warmup = 500;
  long long budget = 1'500;  // environment steps per best response

  void validate() const;
  bool operator==(const BrConfig&) const = default;
};

int action_width(int device_count, int exploit_count);
int policy_input_size(int device_count);
// Device blocks of an observation (the trailing step fraction removed).
Eigen::VectorXd policy_input(const env::Observation& o);
Eigen::VectorXd encode_atom(const env::ActionAtom& atom, int device_count, int exploit_count);

struct Policy {
  Role role = Role::kAttacker;
  int device_count = 0;
  int exploit_count = 0;
  double gamma = 0.99;
  double noise_std = 0.1;
  int greedy_k = 5;
  double greedy_tau = 0.5;
  nn::Mlp actor;
  nn::Mlp critic;
  nn::Mlp actor_target;
  nn::Mlp critic_target;

  // Fresh networks; targets start as copies.
  static Policy random(const env::EnvConfig& env_config, Role role, const BrConfig& config,
                       std::uint64_t seed);

  bool operator==(const Policy&) const = default;

  // Header "MDPL", u32 version, role, sizes, gamma, decoding settings, then
  // four network checkpoints.
  void save(std::ostream& out) const;
  static Policy load(std::istream& in);
};

// Critic values for one policy input and several atoms, sharing the
// observation half of the first layer.
Eigen::VectorXd critic_scores(const Policy& policy, const Eigen::VectorXd& input,
                              const std::vector<env::ActionAtom>& atoms);
Eigen::VectorXd critic_scores(const nn::Mlp& critic, int device_count, int exploit_count,
                              const Eigen::VectorXd& input,
                              const std::vector<env::ActionAtom>& atoms);

struct DecodeStats {
  long long critic_evaluations = 0;
  long long cache_hits = 0;
  long long candidates = 0;
};

struct CacheContext {
  qcache::QCache* cache = nullptr;
  std::uint64_t state_key = 0;
};

// One atom per allowed device (devices with no legal atom are skipped);
// {noop(0)} when nothing is emitted. Advances the cache clock once when a
// cache is given.
std::vector<env::ActionAtom> act(const Policy& policy, const env::NetworkState& state,
                                 const env::Observation& o, const std::vector<int>& allowed,
                                 CacheContext cache, bool explore, Rng& rng,
                                 DecodeStats* stats = nullptr);

struct Transition {
  Eigen::VectorXd input;
  Eigen::VectorXd action;  // encoded atom
  double reward = 0.0;
  Eigen::VectorXd next_input;
  bool done = false;
  // Legal atoms on the devices the learner was allowed to act on in s'. The
  // bootstrap action is decoded from these; empty means noop(0).
  std::shared_ptr<const std::vector<env::ActionAtom>> next_candidates;
};

// Nearest-legal decoding: per device, the candidate with the largest dot
// product against `preferences`. Sorted by node.
std::vector<env::ActionAtom> nearest_legal(const Eigen::VectorXd& preferences,
                                           const std::vector<env::ActionAtom>& candidates,
                                           int device_count);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000) : ring_(capacity) {}
  void push(Transition t) { ring_.push(std::move(t)); }
  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return ring_.capacity(); }
  const Transition& at(std::size_t i) const { return ring_.at(i); }
  // Uniform without replacement; fewer when the buffer is small.
  std::vector<const Transition*> sample(std::size_t count, Rng& rng) const;

 private:
  RingBuffer<Transition> ring_;
};

// Mean squared TD error; gradient with respect to critic.params(). The target
// is r + gamma * mean over devices of Q_target(s', a') where a' is the target
// actor's nearest-legal atom on that device (none for done transitions).
double critic_loss(const Policy& policy, const std::vector<const Transition*>& batch,
                   Eigen::VectorXd* gradient = nullptr);
// Mean critic value at a = actor(s); gradient with respect to actor.params().
double actor_objective(const Policy& policy, const std::vector<const Transition*>& batch,
                       Eigen::VectorXd* gradient = nullptr);

struct Optimizers {
  nn::OptimizerState actor;
  nn::OptimizerState critic;
  Optimizers(const Policy& policy, const BrConfig& config)
      : actor(config.actor_lr, policy.actor.parameter_count()),
        critic(config.critic_lr, policy.critic.parameter_count()) {}
};

// One clipped Adam step on the critic. Returns the pre-step loss.
double critic_step(Policy& policy, const std::vector<const Transition*>& batch,
                   Optimizers& opt, double max_grad_norm);
// One clipped Adam ascent step on the actor; the critic is not touched.
// Returns the pre-step objective.
double actor_step(Policy& policy, const std::vector<const Transition*>& batch,
                  Optimizers& opt, double max_grad_norm);
void update_targets(Policy& policy, double tau);

// A pure strategy in the restricted game. A null policy acts noop; a null
// meta-controller leaves every visible device allowed.
struct Agent {
  std::shared_ptr<const Policy> policy;
  std::shared_ptr<const meta::MetaController> meta;
  std::string label;
};

struct Mixture {
  std::vector<Agent> agents;
  std::vector<double> probabilities;

  static Mixture pure(Agent agent);
  // Non-empty, matching sizes, non-negative, sums to 1 within 1e-9.
  void validate() const;
  std::size_t sample(Rng& rng) const;
};

// Drives one agent through episodes. Meta and cache are borrowed.
class Runner {
 public:
  Runner(const Policy* policy, Role role, meta::MetaController* meta, qcache::QCache* cache);

  struct Decision {
    env::Observation observation;
    std::vector<int> allowed;
    std::vector<env::ActionAtom> atoms;
  };

  void begin_episode();
  Decision decide(const env::NetworkState& state, bool explore, Rng& rng,
                  DecodeStats* stats = nullptr);
  void after_step(const std::vector<int>& changed, const env::NetworkState& after);

  Role role() const { return role_; }

 private:
  const Policy* policy_;
  Role role_;
  meta::MetaController* meta_;
  qcache::QCache* cache_;
};

// Runner over a private copy of an agent's meta-controller.
class AgentRunner {
 public:
  AgentRunner(const Agent& agent, Role role,
              std::optional<qcache::CacheConfig> cache_config = std::nullopt);
  AgentRunner(const AgentRunner&) = delete;
  AgentRunner& operator=(const AgentRunner&) = delete;

  Runner& runner() { return runner_; }
  const qcache::QCache* cache() const { return cache_ ? &*cache_ : nullptr; }

 private:
  std::optional<meta::MetaController> meta_;
  std::optional<qcache::QCache> cache_;
  Runner runner_;
};

struct EpisodeRow {
  int episode = 0;
  long long steps = 0;       // cumulative environment steps
  double episode_return = 0; // learner's undiscounted return, raw reward units
  double critic_loss = 0;    // mean over updates in the episode
  double actor_objective = 0;
  long long critic_evaluations = 0;
  long long cache_hits = 0;
  long long cache_misses = 0;
  double wall_ms = 0;
};

struct TrainResult {
  Policy policy;
  std::vector<EpisodeRow> rows;
  long long critic_evaluations = 0;
  long long candidates = 0;
};

// Trains `role` against `opponent` for config.budget environment steps. The
// opponent agent is resampled each episode and acts greedily without a
// cache. `meta` and `cache` may be null (no pruning / no caching); when given
// they are updated in place. Stored rewards are reward_scale * r / R_max.
TrainResult train_best_response(const env::EnvConfig& env_config, const Mixture& opponent,
                                Role role, meta::MetaController* meta, qcache::QCache* cache,
                                const BrConfig& config, std::uint64_t seed);

// CSV with header
// episode,steps,return,critic_loss,actor_objective,critic_evaluations,cache_hits,cache_misses,wall_ms
void write_metrics_csv(std::ostream& out, const std::vector<EpisodeRow>& rows);

}  // namespace metadoar::br
