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

#include "metadoar/br.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "metadoar/binary_io.hpp"

namespace metadoar::br {
namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

constexpr const char* kPolicyWhat = "policy checkpoint";

// Offsets of the three one-hot blocks inside an encoded action.
int type_offset(int m) { return m; }
int exploit_offset(int m) { return m + env::kTypesPerRole; }

void check_atom_fits(const env::ActionAtom& atom, int m, int e) {
  if (atom.node < 0 || atom.node >= m) throw Error("encode_atom: node out of range");
  if (atom.exploit_id && (*atom.exploit_id < 0 || *atom.exploit_id >= e))
    throw Error("encode_atom: exploit id out of range");
}

Eigen::MatrixXd stack_inputs(const std::vector<const Transition*>& batch, bool next) {
  const auto d = (next ? batch[0]->next_input : batch[0]->input).size();
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = next ? batch[j]->next_input : batch[j]->input;
  return x;
}

Eigen::MatrixXd stack_actions(const std::vector<const Transition*>& batch) {
  Eigen::MatrixXd a(batch[0]->action.size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) a.col(static_cast<Eigen::Index>(j)) = batch[j]->action;
  return a;
}

Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

void write_net(std::ostream& out, const nn::Mlp& net) { nn::write_checkpoint(out, net); }

double preference(const Eigen::VectorXd& pref, const env::ActionAtom& a, int m) {
  double s = pref[a.node] + pref[type_offset(m) + env::type_index(a.type)];
  if (a.exploit_id) s += pref[exploit_offset(m) + *a.exploit_id];
  return s;
}

}  // namespace

void BrConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& constraint) {
    throw Error("br." + field + ": " + constraint);
  };
  if (hidden < 1) fail("hidden", "must be a positive integer");
  if (!(actor_lr > 0.0)) fail("actor_lr", "must be > 0");
  if (!(critic_lr > 0.0)) fail("critic_lr", "must be > 0");
  if (!(reward_scale > 0.0)) fail("reward_scale", "must be > 0");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must lie in (0, 1]");
  if (!(noise_std > 0.0)) fail("noise_std", "must be > 0");
  if (greedy_k < 1) fail("greedy_k", "must be a positive integer");
  if (!(greedy_tau > 0.0)) fail("greedy_tau", "must be > 0");
  if (replay_capacity < 1) fail("replay_capacity", "must be a positive integer");
  if (batch_size < 1) fail("batch_size", "must be a positive integer");
  if (warmup < 0) fail("warmup", "must be >= 0");
  if (budget < 0) fail("budget", "must be >= 0");
}

int action_width(int device_count, int exploit_count) {
  return device_count + env::kTypesPerRole + exploit_count;
}

int policy_input_size(int device_count) { return env::kFeaturesPerDevice * device_count; }

Eigen::VectorXd policy_input(const env::Observation& o) {
  if (o.values.size() < 1) throw Error("policy_input: empty observation");
  return o.values.head(o.values.size() - 1);
}

Eigen::VectorXd encode_atom(const env::ActionAtom& atom, int device_count, int exploit_count) {
  check_atom_fits(atom, device_count, exploit_count);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(action_width(device_count, exploit_count));
  v[atom.node] = 1.0;
  v[type_offset(device_count) + env::type_index(atom.type)] = 1.0;
  if (atom.exploit_id) v[exploit_offset(device_count) + *atom.exploit_id] = 1.0;
  return v;
}

Policy Policy::random(const env::EnvConfig& env_config, Role role, const BrConfig& config,
                      std::uint64_t seed) {
  env_config.validate();
  config.validate();
  Policy p;
  p.role = role;
  p.device_count = env_config.device_count;
  p.exploit_count = env_config.exploit_catalog_size;
  p.gamma = env_config.gamma;
  p.noise_std = config.noise_std;
  p.greedy_k = config.greedy_k;
  p.greedy_tau = config.greedy_tau;
  const int d = policy_input_size(p.device_count);
  const int w = action_width(p.device_count, p.exploit_count);
  Rng rng(seed);
  p.actor = nn::Mlp({d, config.hidden, config.hidden, w}, nn::Activation::kRelu,
                    nn::Activation::kTanh, rng);
  p.critic = nn::Mlp({d + w, config.hidden, config.hidden, 1}, nn::Activation::kRelu,
                     nn::Activation::kIdentity, rng);
  p.actor_target = p.actor;
  p.critic_target = p.critic;
  return p;
}

void Policy::save(std::ostream& out) const {
  out.write("MDPL", 4);
  binary::put_u32(out, 1);
  binary::put_u32(out, role == Role::kAttacker ? 0 : 1);
  binary::put_u32(out, static_cast<std::uint32_t>(device_count));
  binary::put_u32(out, static_cast<std::uint32_t>(exploit_count));
  binary::put_u32(out, static_cast<std::uint32_t>(greedy_k));
  binary::put_f64(out, gamma);
  binary::put_f64(out, noise_std);
  binary::put_f64(out, greedy_tau);
  write_net(out, actor);
  write_net(out, critic);
  write_net(out, actor_target);
  write_net(out, critic_target);
  if (!out) throw Error("policy checkpoint: write failed");
}

Policy Policy::load(std::istream& in) {
  binary::expect_magic(in, "MDPL", kPolicyWhat);
  if (binary::get_u32(in, kPolicyWhat) != 1) throw Error("policy checkpoint: unsupported version");
  Policy p;
  p.role = binary::get_u32(in, kPolicyWhat) == 0 ? Role::kAttacker : Role::kDefender;
  p.device_count = static_cast<int>(binary::get_u32(in, kPolicyWhat));
  p.exploit_count = static_cast<int>(binary::get_u32(in, kPolicyWhat));
  p.greedy_k = static_cast<int>(binary::get_u32(in, kPolicyWhat));
  p.gamma = binary::get_f64(in, kPolicyWhat);
  p.noise_std = binary::get_f64(in, kPolicyWhat);
  p.greedy_tau = binary::get_f64(in, kPolicyWhat);
  p.actor = nn::read_checkpoint(in);
  p.critic = nn::read_checkpoint(in);
  p.actor_target = nn::read_checkpoint(in);
  p.critic_target = nn::read_checkpoint(in);
  const int d = policy_input_size(p.device_count);
  const int w = action_width(p.device_count, p.exploit_count);
  if (p.actor.input_size() != d || p.actor.output_size() != w ||
      p.critic.input_size() != d + w || p.critic.output_size() != 1 ||
      !p.actor_target.same_shape(p.actor) || !p.critic_target.same_shape(p.critic))
    throw Error("policy checkpoint: network shapes do not match header");
  return p;
}

Eigen::VectorXd critic_scores(const Policy& policy, const Eigen::VectorXd& input,
                              const std::vector<env::ActionAtom>& atoms) {
  return critic_scores(policy.critic, policy.device_count, policy.exploit_count, input, atoms);
}

Eigen::VectorXd critic_scores(const nn::Mlp& c, int m, int e, const Eigen::VectorXd& input,
                              const std::vector<env::ActionAtom>& atoms) {
  const auto d = input.size();
  if (d != policy_input_size(m) || c.input_size() != d + action_width(m, e))
    throw Error("critic_scores: input size mismatch");
  if (atoms.empty()) return Eigen::VectorXd();
  const auto w0 = c.weight(0);
  const Eigen::VectorXd shared = w0.leftCols(d) * input + c.bias(0);
  Eigen::MatrixXd z(shared.size(), static_cast<Eigen::Index>(atoms.size()));
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const auto& atom = atoms[j];
    check_atom_fits(atom, m, e);
    auto col = z.col(static_cast<Eigen::Index>(j));
    col = shared + w0.col(d + atom.node) + w0.col(d + type_offset(m) + env::type_index(atom.type));
    if (atom.exploit_id) col += w0.col(d + exploit_offset(m) + *atom.exploit_id);
  }
  z = nn::activate(c.activation(0), z);
  for (int l = 1; l < c.layer_count(); ++l) {
    z = c.weight(l) * z;
    z.colwise() += c.bias(l);
    z = nn::activate(c.activation(l), z);
  }
  return z.row(0).transpose();
}

std::vector<env::ActionAtom> act(const Policy& policy, const env::NetworkState& state,
                                 const env::Observation& o, const std::vector<int>& allowed,
                                 CacheContext cache, bool explore, Rng& rng, DecodeStats* stats) {
  const int m = policy.device_count;
  const Eigen::VectorXd input = policy_input(o);
  Eigen::VectorXd pref = policy.actor.forward(input);
  if (explore)
    for (Eigen::Index i = 0; i < pref.size(); ++i) pref[i] += policy.noise_std * standard_normal(rng);

  std::vector<int> devices = allowed;
  std::sort(devices.begin(), devices.end());
  devices.erase(std::unique(devices.begin(), devices.end()), devices.end());

  // Candidates per device, then one batched critic pass over cache misses.
  std::vector<std::vector<env::ActionAtom>> candidates;
  std::vector<env::ActionAtom> flat;
  for (int node : devices) {
    if (node < 0 || node >= m) throw Error("act: allowed device out of range");
    auto legal = env::legal_actions_for_device(state, policy.role, node);
    if (legal.empty()) continue;
    std::vector<double> rank(legal.size());
    for (std::size_t j = 0; j < legal.size(); ++j) rank[j] = preference(pref, legal[j], m);
    std::vector<std::size_t> order(legal.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rank[a] > rank[b]; });
    order.resize(std::min<std::size_t>(order.size(), idx(policy.greedy_k)));
    std::vector<env::ActionAtom> keep;
    for (auto j : order) keep.push_back(legal[j]);
    flat.insert(flat.end(), keep.begin(), keep.end());
    candidates.push_back(std::move(keep));
  }

  std::vector<double> q(flat.size(), 0.0);
  std::vector<env::ActionAtom> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t j = 0; j < flat.size(); ++j) {
    std::optional<double> hit;
    if (cache.cache) hit = cache.cache->lookup(qcache::make_key(cache.state_key, flat[j]));
    if (hit) {
      q[j] = *hit;
      if (stats) ++stats->cache_hits;
    } else {
      missing.push_back(flat[j]);
      missing_at.push_back(j);
    }
  }
  if (!missing.empty()) {
    const Eigen::VectorXd scores = critic_scores(policy, input, missing);
    for (std::size_t j = 0; j < missing.size(); ++j) {
      q[missing_at[j]] = scores[static_cast<Eigen::Index>(j)];
      if (cache.cache)
        cache.cache->insert(qcache::make_key(cache.state_key, missing[j]), scores[static_cast<Eigen::Index>(j)]);
    }
  }
  if (stats) {
    stats->critic_evaluations += static_cast<long long>(missing.size());
    stats->candidates += static_cast<long long>(flat.size());
  }

  std::vector<env::ActionAtom> out;
  std::size_t base = 0;
  for (const auto& group : candidates) {
    const std::size_t n = group.size();
    std::size_t best = 0;
    if (explore && n > 1) {
      double top = q[base];
      for (std::size_t j = 1; j < n; ++j) top = std::max(top, q[base + j]);
      std::vector<double> w(n);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += w[j] = std::exp((q[base + j] - top) / policy.greedy_tau);
      double u = uniform01(rng) * total;
      best = n - 1;
      for (std::size_t j = 0; j < n; ++j) {
        if (u < w[j]) {
          best = j;
          break;
        }
        u -= w[j];
      }
    } else {
      for (std::size_t j = 1; j < n; ++j)
        if (q[base + j] > q[base + best]) best = j;
    }
    out.push_back(group[best]);
    base += n;
  }
  if (cache.cache) cache.cache->tick();
  if (out.empty()) out.push_back(env::noop_atom(0));
  return out;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  std::vector<const Transition*> out;
  for (auto i : ring_.sample_indices(count, rng)) out.push_back(&ring_.at(i));
  return out;
}

std::vector<env::ActionAtom> nearest_legal(const Eigen::VectorXd& preferences,
                                           const std::vector<env::ActionAtom>& candidates,
                                           int device_count) {
  std::vector<std::optional<std::pair<double, env::ActionAtom>>> best(idx(device_count));
  for (const auto& a : candidates) {
    if (a.node < 0 || a.node >= device_count) throw Error("nearest_legal: node out of range");
    const double s = preference(preferences, a, device_count);
    auto& slot = best[idx(a.node)];
    if (!slot || s > slot->first || (s == slot->first && a < slot->second)) slot.emplace(s, a);
  }
  std::vector<env::ActionAtom> out;
  for (const auto& slot : best)
    if (slot) out.push_back(slot->second);
  return out;
}

double critic_loss(const Policy& policy, const std::vector<const Transition*>& batch,
                   Eigen::VectorXd* gradient) {
  if (batch.empty()) throw Error("critic_loss: empty batch");
  const int m = policy.device_count;
  const int e = policy.exploit_count;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd x = stack_inputs(batch, false);
  const Eigen::MatrixXd xn = stack_inputs(batch, true);
  const Eigen::MatrixXd next_pref = policy.actor_target.forward_batch(xn);
  Eigen::RowVectorXd y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto* t = batch[static_cast<std::size_t>(j)];
    y[j] = t->reward;
    if (t->done) continue;
    std::vector<env::ActionAtom> next;
    if (t->next_candidates) next = nearest_legal(next_pref.col(j), *t->next_candidates, m);
    if (next.empty()) next.push_back(env::noop_atom(0));
    y[j] += policy.gamma * critic_scores(policy.critic_target, m, e, xn.col(j), next).mean();
  }
  nn::Mlp::Tape tape;
  const Eigen::MatrixXd q = policy.critic.forward(concat_rows(x, stack_actions(batch)), tape);
  const Eigen::RowVectorXd diff = q.row(0) - y;
  const double loss = diff.squaredNorm() / static_cast<double>(n);
  if (gradient) {
    const Eigen::MatrixXd upstream = 2.0 * diff / static_cast<double>(n);
    *gradient = policy.critic.backward(tape, upstream).params;
  }
  return loss;
}

double actor_objective(const Policy& policy, const std::vector<const Transition*>& batch,
                       Eigen::VectorXd* gradient) {
  if (batch.empty()) throw Error("actor_objective: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd x = stack_inputs(batch, false);
  nn::Mlp::Tape actor_tape;
  const Eigen::MatrixXd a = policy.actor.forward(x, actor_tape);
  nn::Mlp::Tape critic_tape;
  const Eigen::MatrixXd q = policy.critic.forward(concat_rows(x, a), critic_tape);
  const double objective = q.sum() / static_cast<double>(n);
  if (gradient) {
    const Eigen::MatrixXd upstream = Eigen::MatrixXd::Constant(1, n, 1.0 / static_cast<double>(n));
    const auto critic_grads = policy.critic.backward(critic_tape, upstream);
    const Eigen::MatrixXd da = critic_grads.input.bottomRows(a.rows());
    *gradient = policy.actor.backward(actor_tape, da).params;
  }
  return objective;
}

double critic_step(Policy& policy, const std::vector<const Transition*>& batch, Optimizers& opt,
                   double max_grad_norm) {
  Eigen::VectorXd grad;
  const double loss = critic_loss(policy, batch, &grad);
  nn::opt_step(policy.critic.params(), grad, opt.critic, max_grad_norm);
  return loss;
}

double actor_step(Policy& policy, const std::vector<const Transition*>& batch, Optimizers& opt,
                  double max_grad_norm) {
  Eigen::VectorXd grad;
  const double objective = actor_objective(policy, batch, &grad);
  const Eigen::VectorXd descent = -grad;
  nn::opt_step(policy.actor.params(), descent, opt.actor, max_grad_norm);
  return objective;
}

void update_targets(Policy& policy, double tau) {
  nn::soft_update(policy.actor_target, policy.actor, tau);
  nn::soft_update(policy.critic_target, policy.critic, tau);
}

Mixture Mixture::pure(Agent agent) {
  Mixture m;
  m.agents.push_back(std::move(agent));
  m.probabilities.push_back(1.0);
  return m;
}

void Mixture::validate() const {
  if (agents.empty()) throw Error("Mixture: no agents");
  if (agents.size() != probabilities.size()) throw Error("Mixture: size mismatch");
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw Error("Mixture: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("Mixture: probabilities must sum to 1");
}

std::size_t Mixture::sample(Rng& rng) const {
  validate();
  double u = uniform01(rng);
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (u < probabilities[i]) return i;
    u -= probabilities[i];
  }
  // Rounding slack: last agent with positive mass.
  for (std::size_t i = probabilities.size(); i-- > 0;)
    if (probabilities[i] > 0.0) return i;
  return probabilities.size() - 1;
}

Runner::Runner(const Policy* policy, Role role, meta::MetaController* meta, qcache::QCache* cache)
    : policy_(policy), role_(role), meta_(meta), cache_(cache) {
  if (policy_ && policy_->role != role) throw Error("Runner: policy role mismatch");
  if (meta_ && meta_->role() != role) throw Error("Runner: meta-controller role mismatch");
}

void Runner::begin_episode() {
  if (meta_) meta_->mark_all_dirty();
  if (cache_) cache_->clear();
}

Runner::Decision Runner::decide(const env::NetworkState& state, bool explore, Rng& rng,
                                DecodeStats* stats) {
  Decision d;
  d.observation = env::observe(state, role_);
  if (!policy_) {
    d.atoms.push_back(env::noop_atom(0));
    return d;
  }
  if (meta_) {
    d.allowed = meta_->select(state, d.observation);
  } else {
    for (int i = 0; i < state.device_count(); ++i)
      if (state.visible(i, role_)) d.allowed.push_back(i);
  }
  CacheContext ctx;
  if (cache_) {
    const auto decimals = cache_->config().quantization_decimals;
    ctx.cache = cache_;
    ctx.state_key = meta_ ? meta_->cache_state_key(d.observation, decimals)
                          : qcache::state_key(meta::summarize_observation(d.observation.values),
                                              decimals);
  }
  d.atoms = act(*policy_, state, d.observation, d.allowed, ctx, explore, rng, stats);
  return d;
}

void Runner::after_step(const std::vector<int>& changed, const env::NetworkState& after) {
  if (meta_) meta_->mark_dirty(changed);
  if (cache_) cache_->invalidate_khop(changed, after.adjacency);
}

AgentRunner::AgentRunner(const Agent& agent, Role role,
                         std::optional<qcache::CacheConfig> cache_config)
    : meta_(agent.meta && agent.policy ? std::optional<meta::MetaController>(*agent.meta)
                                       : std::nullopt),
      cache_(cache_config && agent.policy ? std::optional<qcache::QCache>(*cache_config)
                                          : std::nullopt),
      runner_(agent.policy.get(), role, meta_ ? &*meta_ : nullptr, cache_ ? &*cache_ : nullptr) {}

TrainResult train_best_response(const env::EnvConfig& env_config, const Mixture& opponent,
                                Role role, meta::MetaController* meta, qcache::QCache* cache,
                                const BrConfig& config, std::uint64_t seed) {
  config.validate();
  opponent.validate();
  if (meta && meta->device_count() != env_config.device_count)
    throw Error("train_best_response: meta-controller device count mismatch");
  TrainResult result{Policy::random(env_config, role, config, mix_seed(seed, 1)), {}, 0, 0};
  Policy& policy = result.policy;
  Optimizers opt(policy, config);
  ReplayBuffer buffer(config.replay_capacity);
  Rng rng(mix_seed(seed, 2));
  Runner learner(&policy, role, meta, cache);
  const double r_max = env::reward_bound(env_config);
  const int m = env_config.device_count;
  const int e = env_config.exploit_catalog_size;

  long long steps = 0;
  for (int episode = 0; steps < config.budget; ++episode) {
    const auto start = std::chrono::steady_clock::now();
    const auto& opp_agent = opponent.agents[opponent.sample(rng)];
    AgentRunner opp(opp_agent, opponent_of(role));
    env::NetworkState state = env::reset(env_config, mix_seed(seed, 3, idx(episode)));
    learner.begin_episode();
    opp.runner().begin_episode();
    const auto counters_before = cache ? cache->counters() : qcache::CacheCounters{};
    DecodeStats stats;
    EpisodeRow row;
    row.episode = episode;
    int updates = 0;
    bool done = false;
    // Transitions of the previous step wait for the allowed set of s'.
    std::vector<Transition> pending;
    while (!done && steps < config.budget) {
      auto mine = learner.decide(state, true, rng, &stats);
      if (!pending.empty()) {
        auto next_candidates = std::make_shared<std::vector<env::ActionAtom>>();
        for (int node : mine.allowed) {
          auto legal = env::legal_actions_for_device(state, role, node);
          next_candidates->insert(next_candidates->end(), legal.begin(), legal.end());
        }
        for (auto& t : pending) {
          t.next_candidates = next_candidates;
          buffer.push(std::move(t));
        }
        pending.clear();
      }
      auto theirs = opp.runner().decide(state, false, rng);
      Eigen::MatrixXd features;
      if (meta && !mine.allowed.empty()) {
        features.resize(meta->feature_size(), static_cast<Eigen::Index>(mine.allowed.size()));
        for (std::size_t j = 0; j < mine.allowed.size(); ++j)
          features.col(static_cast<Eigen::Index>(j)) = meta->node_features(state, mine.allowed[j]);
      }
      const auto& attacker_atoms = role == Role::kAttacker ? mine.atoms : theirs.atoms;
      const auto& defender_atoms = role == Role::kAttacker ? theirs.atoms : mine.atoms;
      const env::StepOutcome outcome = env::apply_step(state, attacker_atoms, defender_atoms);
      done = outcome.done;
      const double r = role == Role::kAttacker ? outcome.reward : -outcome.reward;
      const double scaled = config.reward_scale * r / r_max;
      row.episode_return += r;
      const env::Observation next = env::observe(state, role);
      const Eigen::VectorXd input = policy_input(mine.observation);
      const Eigen::VectorXd next_input = policy_input(next);
      for (const auto& atom : mine.atoms)
        pending.push_back(Transition{input, encode_atom(atom, m, e), scaled, next_input, done, nullptr});
      if (done) {
        for (auto& t : pending) buffer.push(std::move(t));
        pending.clear();
      }
      ++steps;
      if (meta && !mine.allowed.empty()) {
        meta->record(meta::MetaTransition{mine.observation.values, mine.allowed, features, scaled,
                                          next.values, done});
        if (steps % meta->config().train_every == 0) meta->train_from_replay(rng);
      }
      learner.after_step(outcome.changed, state);
      opp.runner().after_step(outcome.changed, state);
      if (buffer.size() >= idx(std::max(config.warmup, 1))) {
        const auto batch = buffer.sample(idx(config.batch_size), rng);
        row.critic_loss += critic_step(policy, batch, opt, config.max_grad_norm);
        row.actor_objective += actor_step(policy, batch, opt, config.max_grad_norm);
        update_targets(policy, config.tau);
        ++updates;
      }
    }
    if (updates > 0) {
      row.critic_loss /= updates;
      row.actor_objective /= updates;
    }
    row.steps = steps;
    row.critic_evaluations = stats.critic_evaluations;
    if (cache) {
      row.cache_hits = cache->counters().hits - counters_before.hits;
      row.cache_misses = cache->counters().misses - counters_before.misses;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.critic_evaluations += stats.critic_evaluations;
    result.candidates += stats.candidates;
    result.rows.push_back(row);
  }
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpisodeRow>& rows) {
  out << "episode,steps,return,critic_loss,actor_objective,critic_evaluations,cache_hits,"
         "cache_misses,wall_ms\n";
  for (const auto& r : rows)
    out << r.episode << ',' << r.steps << ',' << r.episode_return << ',' << r.critic_loss << ','
        << r.actor_objective << ',' << r.critic_evaluations << ',' << r.cache_hits << ','
        << r.cache_misses << ',' << r.wall_ms << '\n';
}

}  // namespace metadoar::br
