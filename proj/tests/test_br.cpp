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
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "metadoar/br.hpp"
#include "metadoar/theory.hpp"

using namespace metadoar;
using namespace metadoar::br;
using env::ActionAtom;
using env::ActionType;

namespace {

std::size_t ix(int i) { return static_cast<std::size_t>(i); }

env::EnvConfig small_env(int m, std::uint64_t seed = 1) {
  env::EnvConfig c;
  c.device_count = m;
  c.exploit_catalog_size = 2;
  c.steps_per_episode = 20;
  c.seed = seed;
  c.initial_vulnerability_prob = 0.6;
  return c;
}

BrConfig small_br() {
  BrConfig c;
  c.hidden = 12;
  c.greedy_k = 6;
  c.batch_size = 8;
  c.warmup = 16;
  c.budget = 60;
  c.replay_capacity = 1000;
  return c;
}

std::vector<ActionAtom> random_subset(const std::vector<ActionAtom>& atoms, Rng& rng, double p) {
  std::vector<ActionAtom> out;
  for (const auto& a : atoms)
    if (uniform01(rng) < p) out.push_back(a);
  return out;
}

// A state a few random steps in, so every atom type shows up.
env::NetworkState scrambled(const env::EnvConfig& c, Rng& rng) {
  auto s = env::reset(c, rng());
  const int steps = static_cast<int>(uniform_index(rng, 5));
  for (int t = 0; t < steps; ++t)
    env::apply_step(s, random_subset(env::legal_actions(s, Role::kAttacker), rng, 0.6),
                    random_subset(env::legal_actions(s, Role::kDefender), rng, 0.1));
  return s;
}

// Full critic forward on the concatenated input, no shared-layer shortcut.
double full_q(const nn::Mlp& critic, const Eigen::VectorXd& input, const ActionAtom& a, int m, int e) {
  Eigen::VectorXd x(input.size() + action_width(m, e));
  x << input, encode_atom(a, m, e);
  return critic.forward(x)[0];
}

// Per device: rank legal atoms by pref . one-hot code (stable), keep k,
// return the critic argmax (first on ties).
std::vector<ActionAtom> brute_force_act(const Policy& p, const env::NetworkState& s,
                                        const Eigen::VectorXd& pref, const std::vector<int>& allowed) {
  const int m = p.device_count, e = p.exploit_count;
  const auto input = policy_input(env::observe(s, p.role));
  std::vector<ActionAtom> out;
  for (int node : allowed) {
    auto legal = env::legal_actions_for_device(s, p.role, node);
    if (legal.empty()) continue;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t j = 0; j < legal.size(); ++j) ranked.push_back({encode_atom(legal[j], m, e).dot(pref), j});
    std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
    ranked.resize(std::min(ranked.size(), ix(p.greedy_k)));
    double best = -1e300;
    ActionAtom pick;
    for (auto& r : ranked) {
      const double q = full_q(p.critic, input, legal[r.second], m, e);
      if (q > best) best = q, pick = legal[r.second];
    }
    out.push_back(pick);
  }
  if (out.empty()) out.push_back(env::noop_atom(0));
  return out;
}

std::vector<Transition> random_transitions(const Policy& p, const env::EnvConfig& c, int n, Rng& rng,
                                           double done_prob) {
  std::vector<Transition> out;
  for (int j = 0; j < n; ++j) {
    const auto s = scrambled(c, rng);
    auto s2 = s;
    env::apply_step(s2, random_subset(env::legal_actions(s2, Role::kAttacker), rng, 0.5), {});
    const auto legal = env::legal_actions(s, p.role);
    const auto atom = legal[uniform_index(rng, legal.size())];
    auto cands = std::make_shared<std::vector<ActionAtom>>();
    for (int node = 0; node < c.device_count; ++node)
      if (uniform01(rng) < 0.7) {
        auto dev = env::legal_actions_for_device(s2, p.role, node);
        cands->insert(cands->end(), dev.begin(), dev.end());
      }
    out.push_back(Transition{policy_input(env::observe(s, p.role)),
                             encode_atom(atom, c.device_count, c.exploit_catalog_size),
                             2.0 * uniform01(rng) - 1.0, policy_input(env::observe(s2, p.role)),
                             uniform01(rng) < done_prob, j % 4 == 3 ? nullptr : cands});
  }
  return out;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& v) {
  std::vector<const Transition*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

}  // namespace

TEST_CASE("atom encoding layout") {
  const auto v = encode_atom({2, ActionType::kPatch, 1, {}}, 4, 3);
  REQUIRE(v.size() == 4 + 4 + 3);
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(11);
  expect[2] = 1;
  expect[4 + 0] = 1;
  expect[8 + 1] = 1;
  CHECK(v == expect);
  CHECK(encode_atom(env::noop_atom(0), 4, 3).sum() == 2.0);
  CHECK_THROWS_AS(encode_atom({4, ActionType::kNoop, {}, {}}, 4, 3), Error);
  CHECK_THROWS_AS(encode_atom({0, ActionType::kExploit, 3, {}}, 4, 3), Error);
  CHECK(policy_input_size(4) == 24);
}

TEST_CASE("shared-layer critic scores match the full forward pass") {
  Rng rng(1);
  for (Role role : {Role::kAttacker, Role::kDefender}) {
    const auto c = small_env(5);
    const auto p = Policy::random(c, role, small_br(), 3);
    const auto s = scrambled(c, rng);
    const auto input = policy_input(env::observe(s, role));
    const auto atoms = env::legal_actions(s, role);
    const auto scores = critic_scores(p, input, atoms);
    for (std::size_t j = 0; j < atoms.size(); ++j)
      CHECK(std::abs(scores[static_cast<Eigen::Index>(j)] - full_q(p.critic, input, atoms[j], 5, 2)) <= 1e-12);
  }
}

TEST_CASE("empty allowed set falls back to noop") {
  Rng rng(2);
  const auto c = small_env(4);
  const auto p = Policy::random(c, Role::kDefender, small_br(), 1);
  const auto s = env::reset(c);
  const auto o = env::observe(s, Role::kDefender);
  qcache::QCache cache;
  const auto out = act(p, s, o, {}, {&cache, 1}, true, rng);
  CHECK(out == std::vector<ActionAtom>{env::noop_atom(0)});
  CHECK(cache.cache_step() == 1);
}

TEST_CASE("greedy decoding matches the brute-force critic argmax") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + trial % 5;
    const Role role = trial % 2 ? Role::kAttacker : Role::kDefender;
    auto cfg = small_br();
    cfg.greedy_k = 1 + trial % 6;
    const auto c = small_env(m, static_cast<std::uint64_t>(trial));
    const auto p = Policy::random(c, role, cfg, static_cast<std::uint64_t>(trial));
    const auto s = scrambled(c, rng);
    const auto o = env::observe(s, role);
    std::vector<int> allowed;
    for (int i = 0; i < m; ++i)
      if (s.visible(i, role) && uniform01(rng) < 0.8) allowed.push_back(i);
    DecodeStats stats;
    const auto got = act(p, s, o, allowed, {}, false, rng, &stats);
    const auto want = brute_force_act(p, s, p.actor.forward(policy_input(o)), allowed);
    CHECK(got == want);
    for (const auto& a : got)
      if (!allowed.empty()) CHECK(std::find(allowed.begin(), allowed.end(), a.node) != allowed.end());
    CHECK(stats.critic_evaluations <= static_cast<long long>(allowed.size()) * cfg.greedy_k);
    CHECK(stats.cache_hits == 0);
  }
}

TEST_CASE("3 devices with 4 candidates each") {
  // defender with two vulnerabilities, isolate and noop on every device
  auto c = small_env(3);
  c.graph_model = env::GraphModel::kRandomRegular;
  c.regular_degree = 2;
  auto s = env::reset(c);
  for (auto& d : s.devices) {
    d.vulnerabilities = 0b11;
    d.compromised = d.attacker_owned = false;
  }
  auto cfg = small_br();
  cfg.greedy_k = 4;
  Rng rng(4);
  for (int seed = 0; seed < 20; ++seed) {
    const auto p = Policy::random(c, Role::kDefender, cfg, static_cast<std::uint64_t>(seed));
    for (int i = 0; i < 3; ++i) REQUIRE(env::legal_actions_for_device(s, Role::kDefender, i).size() == 4);
    const auto o = env::observe(s, Role::kDefender);
    const auto got = act(p, s, o, {0, 1, 2}, {}, false, rng);
    // exhaustive: every candidate scored
    const auto input = policy_input(o);
    for (int i = 0; i < 3; ++i) {
      double best = -1e300;
      ActionAtom pick;
      for (const auto& a : env::legal_actions_for_device(s, Role::kDefender, i)) {
        const double q = full_q(p.critic, input, a, 3, 2);
        if (q > best) best = q, pick = a;
      }
      CHECK(got[ix(i)] == pick);
    }
  }
}

TEST_CASE("cached decoding reproduces uncached decoding") {
  Rng rng(5);
  const auto c = small_env(5);
  const auto p = Policy::random(c, Role::kAttacker, small_br(), 8);
  qcache::CacheConfig strict;
  strict.ttl.reset();
  strict.flush_interval.reset();
  strict.reeval_prob = 0.0;
  strict.quantization_decimals.reset();
  qcache::QCache cache(strict);
  const auto s = scrambled(c, rng);
  const auto o = env::observe(s, Role::kAttacker);
  std::vector<int> allowed;
  for (int i = 0; i < 5; ++i)
    if (s.visible(i, Role::kAttacker)) allowed.push_back(i);
  const auto key = qcache::state_key(policy_input(o), std::nullopt);
  DecodeStats first, second;
  const auto a = act(p, s, o, allowed, {&cache, key}, false, rng, &first);
  const auto b = act(p, s, o, allowed, {&cache, key}, false, rng, &second);
  CHECK(a == b);
  CHECK(a == act(p, s, o, allowed, {}, false, rng));
  CHECK(second.critic_evaluations == 0);
  CHECK(second.cache_hits == first.critic_evaluations);
}

TEST_CASE("exploration stays on legal atoms of allowed devices") {
  Rng rng(6);
  const auto c = small_env(5);
  for (Role role : {Role::kAttacker, Role::kDefender}) {
    const auto p = Policy::random(c, role, small_br(), 2);
    for (int t = 0; t < 50; ++t) {
      const auto s = scrambled(c, rng);
      std::vector<int> allowed;
      for (int i = 0; i < 5; ++i)
        if (uniform01(rng) < 0.5) allowed.push_back(i);
      for (const auto& a : act(p, s, env::observe(s, role), allowed, {}, true, rng)) {
        CHECK(env::is_legal(s, role, a));
        if (a != env::noop_atom(0)) CHECK(std::find(allowed.begin(), allowed.end(), a.node) != allowed.end());
      }
    }
  }
}

TEST_CASE("nearest-legal decoding matches a brute-force scan") {
  Rng rng(7);
  const auto c = small_env(5);
  for (int t = 0; t < 50; ++t) {
    const auto s = scrambled(c, rng);
    const auto cands = env::legal_actions(s, Role::kDefender);
    Eigen::VectorXd pref(action_width(5, 2));
    for (Eigen::Index i = 0; i < pref.size(); ++i) pref[i] = 2.0 * uniform01(rng) - 1.0;
    const auto got = nearest_legal(pref, cands, 5);
    std::vector<ActionAtom> want;
    for (int node = 0; node < 5; ++node) {
      double best = -1e300;
      std::optional<ActionAtom> pick;
      for (const auto& a : cands)
        if (a.node == node && encode_atom(a, 5, 2).dot(pref) > best)
          best = encode_atom(a, 5, 2).dot(pref), pick = a;
      if (pick) want.push_back(*pick);
    }
    CHECK(got == want);
  }
}

TEST_CASE("critic loss with gamma 0 and with done transitions") {
  Rng rng(8);
  auto c = small_env(4);
  auto p = Policy::random(c, Role::kAttacker, small_br(), 5);
  const auto data = random_transitions(p, c, 10, rng, 0.0);
  auto q_of = [&](const Transition& t) {
    Eigen::VectorXd x(t.input.size() + t.action.size());
    x << t.input, t.action;
    return p.critic.forward(x)[0];
  };
  p.gamma = 0.0;
  double expect = 0.0;
  for (const auto& t : data) expect += std::pow(q_of(t) - t.reward, 2) / 10.0;
  CHECK(critic_loss(p, pointers(data)) == doctest::Approx(expect).epsilon(1e-12));

  p.gamma = 0.97;
  auto done = data;
  for (auto& t : done) t.done = true;
  CHECK(critic_loss(p, pointers(done)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("critic loss target follows the decoded target action") {
  Rng rng(9);
  auto c = small_env(4);
  auto p = Policy::random(c, Role::kDefender, small_br(), 6);
  // separate targets from the online nets
  Rng jitter(1);
  for (Eigen::Index i = 0; i < p.critic_target.params().size(); ++i)
    p.critic_target.params()[i] += 0.05 * standard_normal(jitter);
  for (Eigen::Index i = 0; i < p.actor_target.params().size(); ++i)
    p.actor_target.params()[i] += 0.05 * standard_normal(jitter);
  const auto data = random_transitions(p, c, 12, rng, 0.3);
  double expect = 0.0;
  for (const auto& t : data) {
    double y = t.reward;
    if (!t.done) {
      const Eigen::VectorXd pref = p.actor_target.forward(t.next_input);
      std::vector<ActionAtom> next;
      if (t.next_candidates)
        for (int node = 0; node < 4; ++node) {
          double best = -1e300;
          std::optional<ActionAtom> pick;
          for (const auto& a : *t.next_candidates)
            if (a.node == node && encode_atom(a, 4, 2).dot(pref) > best)
              best = encode_atom(a, 4, 2).dot(pref), pick = a;
          if (pick) next.push_back(*pick);
        }
      if (next.empty()) next.push_back(env::noop_atom(0));
      double mean = 0.0;
      for (const auto& a : next) mean += full_q(p.critic_target, t.next_input, a, 4, 2) / static_cast<double>(next.size());
      y += p.gamma * mean;
    }
    Eigen::VectorXd x(t.input.size() + t.action.size());
    x << t.input, t.action;
    expect += std::pow(p.critic.forward(x)[0] - y, 2) / 12.0;
  }
  CHECK(critic_loss(p, pointers(data)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("critic and actor gradients match finite differences") {
  Rng rng(10);
  for (int instance = 0; instance < 20; ++instance) {
    const Role role = instance % 2 ? Role::kAttacker : Role::kDefender;
    auto c = small_env(2 + instance % 3, static_cast<std::uint64_t>(instance));
    auto cfg = small_br();
    cfg.hidden = 6;
    auto p = Policy::random(c, role, cfg, static_cast<std::uint64_t>(instance));
    // random biases too: with zero biases an all-negative hidden layer puts
    // the next pre-activation exactly on the relu kink
    for (nn::Mlp* net : {&p.actor, &p.critic, &p.actor_target, &p.critic_target})
      for (Eigen::Index i = 0; i < net->params().size(); ++i) net->params()[i] = uniform01(rng) - 0.5;
    const auto data = random_transitions(p, c, 5, rng, 0.2);
    const auto batch = pointers(data);

    Eigen::VectorXd g;
    critic_loss(p, batch, &g);
    auto f = [&](const Eigen::VectorXd& params) {
      Policy copy = p;
      copy.critic.params() = params;
      return critic_loss(copy, batch);
    };
    CHECK(nn::max_relative_error(g, nn::finite_difference_gradient(f, p.critic.params(), 1e-5)) <= 1e-4);

    Eigen::VectorXd ga;
    actor_objective(p, batch, &ga);
    auto fa = [&](const Eigen::VectorXd& params) {
      Policy copy = p;
      copy.actor.params() = params;
      return actor_objective(copy, batch);
    };
    const auto fda = nn::finite_difference_gradient(fa, p.actor.params(), 1e-5);
    CHECK(nn::max_relative_error(ga, fda) <= 1e-4);
  }
}

TEST_CASE("actor gradient in the linear and action-blind cases") {
  Rng rng(11);
  const auto c = small_env(3);
  auto p = Policy::random(c, Role::kAttacker, small_br(), 4);
  const auto data = random_transitions(p, c, 6, rng, 0.0);
  const auto batch = pointers(data);
  const int d = policy_input_size(3), w = action_width(3, 2);

  // the critic ignores its action half
  auto blind = p;
  blind.critic.weight(0).rightCols(w).setZero();
  Eigen::VectorXd g;
  actor_objective(blind, batch, &g);
  CHECK(g.cwiseAbs().maxCoeff() == 0.0);

  // Q = u . a with a = A x + b: dJ/dA = u (mean x)^T, dJ/db = u
  auto lin = p;
  lin.actor = nn::Mlp({d, w}, nn::Activation::kRelu, nn::Activation::kIdentity, rng);
  lin.critic = nn::Mlp({d + w, 1}, nn::Activation::kRelu, nn::Activation::kIdentity, rng);
  lin.actor_target = lin.actor;
  lin.critic_target = lin.critic;
  actor_objective(lin, batch, &g);
  const Eigen::VectorXd u = lin.critic.weight(0).row(0).tail(w).transpose();
  Eigen::VectorXd mean_x = Eigen::VectorXd::Zero(d);
  for (const auto* t : batch) mean_x += t->input / static_cast<double>(batch.size());
  nn::Mlp holder = lin.actor;
  holder.params() = g;
  CHECK((holder.weight(0) - u * mean_x.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((holder.bias(0) - u).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("actor steps leave the critic alone and raise the objective") {
  Rng rng(12);
  const auto c = small_env(3);
  auto p = Policy::random(c, Role::kDefender, small_br(), 9);
  const auto data = random_transitions(p, c, 8, rng, 0.0);
  const auto batch = pointers(data);
  Optimizers opt(p, small_br());
  const auto critic = p.critic;
  const double before = actor_objective(p, batch);
  for (int i = 0; i < 20; ++i) actor_step(p, batch, opt, 0.5);
  CHECK(p.critic == critic);
  CHECK(actor_objective(p, batch) > before);
}

TEST_CASE("replay buffer keeps the newest transitions") {
  ReplayBuffer buffer(5);
  for (int i = 0; i < 12; ++i) {
    Transition t;
    t.reward = i;
    buffer.push(std::move(t));
    CHECK(buffer.size() == std::min(i + 1, 5));
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(buffer.at(i).reward == 7.0 + static_cast<double>(i));
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto picks = buffer.sample(3, rng);
    std::set<const Transition*> unique(picks.begin(), picks.end());
    CHECK(unique.size() == 3);
  }
  CHECK(buffer.sample(10, rng).size() == 5);
}

TEST_CASE("mixture sampling passes a chi-squared test") {
  Mixture mix;
  mix.probabilities = {0.1, 0.2, 0.3, 0.4};
  mix.agents.resize(4);
  Rng rng(14);
  std::vector<int> counts(4, 0);
  const int n = 10'000;
  for (int i = 0; i < n; ++i) counts[mix.sample(rng)]++;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = n * mix.probabilities[i];
    chi2 += std::pow(counts[i] - expect, 2) / expect;
  }
  // 99th percentile of chi-squared with 3 degrees of freedom
  CHECK(chi2 < 11.345);

  mix.probabilities = {0.5, 0.6, 0.0, -0.1};
  CHECK_THROWS_AS(mix.validate(), Error);
  mix.probabilities = {0.5, 0.5};
  CHECK_THROWS_AS(mix.validate(), Error);
  mix.probabilities = {0.0, 1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(mix.sample(rng) == 1);
}

TEST_CASE("policy checkpoints round-trip") {
  const auto p = Policy::random(small_env(4), Role::kAttacker, small_br(), 3);
  std::stringstream ss;
  p.save(ss);
  CHECK(Policy::load(ss) == p);
  std::stringstream cut(ss.str().substr(0, 100));
  CHECK_THROWS_AS(Policy::load(cut), Error);
}

TEST_CASE("training with no budget returns the initialization") {
  const auto c = small_env(4);
  auto cfg = small_br();
  cfg.budget = 0;
  const auto noop = Mixture::pure(Agent{});
  const auto r = train_best_response(c, noop, Role::kDefender, nullptr, nullptr, cfg, 42);
  CHECK(r.policy == Policy::random(c, Role::kDefender, cfg, mix_seed(42, 1)));
  CHECK(r.rows.empty());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto c = small_env(5);
  auto cfg = small_br();
  auto run = [&](std::uint64_t seed, bool with_meta) {
    meta::MetaController mc(5, Role::kAttacker);
    qcache::QCache cache;
    const auto opp = Policy::random(c, Role::kDefender, cfg, 77);
    Mixture mix;
    mix.agents = {Agent{}, Agent{std::make_shared<Policy>(opp), nullptr, "d1"}};
    mix.probabilities = {0.5, 0.5};
    auto r = train_best_response(c, mix, Role::kAttacker, with_meta ? &mc : nullptr,
                                 with_meta ? &cache : nullptr, cfg, seed);
    return std::make_pair(r.policy, mc.trainable_parameters());
  };
  for (bool with_meta : {false, true}) {
    const auto a = run(5, with_meta), b = run(5, with_meta), other = run(6, with_meta);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK_FALSE(a.first == other.first);
  }
}

TEST_CASE("runner marks changed devices dirty") {
  Rng rng(15);
  const auto c = small_env(8);
  const auto p = Policy::random(c, Role::kDefender, small_br(), 1);
  meta::MetaController mc(8, Role::kDefender);
  Runner runner(&p, Role::kDefender, &mc, nullptr);
  auto s = env::reset(c);
  runner.begin_episode();
  for (int t = 0; t < 15; ++t) {
    const auto d = runner.decide(s, true, rng);
    CHECK(mc.dirty_count() == 0);
    const auto out = env::apply_step(s, random_subset(env::legal_actions(s, Role::kAttacker), rng, 0.5), d.atoms);
    runner.after_step(out.changed, s);
    for (int i : out.changed) CHECK(mc.dirty()[ix(i)]);
  }
}

TEST_CASE("one-device defender learns the restore value") {
  // A compromised device with no vulnerabilities and no edges: the defender
  // can restore (cost 0.2 + workload) or wait (30 per step).
  env::EnvConfig c;
  c.device_count = 1;
  c.num_attacker_owned = 0;
  c.initial_compromised_ratio = 1.0;
  c.initial_vulnerability_prob = 0.0;
  c.events_rate = 0.0;
  c.steps_per_episode = 10;
  c.gamma = 0.9;
  c.seed = 3;
  const auto s0 = env::reset(c);
  REQUIRE(s0.devices[0].compromised);
  const double w = s0.devices[0].workload_value;
  const int horizon = c.steps_per_episode;

  // Tabular model: state (t, compromised), terminal state last.
  theory::TabularMdp mdp;
  mdp.n_states = 2 * horizon + 1;
  mdp.n_actions = 2;  // noop, restore
  mdp.gamma = c.gamma;
  const int terminal = 2 * horizon;
  auto id = [](int t, int comp) { return 2 * t + comp; };
  mdp.transitions.assign(2, Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states));
  mdp.rewards = Eigen::MatrixXd::Zero(mdp.n_states, 2);
  mdp.available.assign(ix(mdp.n_states), {true, false});
  for (int t = 0; t < horizon; ++t) {
    const int next_t = t + 1;
    auto dest = [&](int comp) { return next_t == horizon ? terminal : id(next_t, comp); };
    mdp.transitions[0](id(t, 0), dest(0)) = 1.0;
    mdp.transitions[0](id(t, 1), dest(1)) = 1.0;
    mdp.rewards(id(t, 1), 0) = -c.comp_scale;
    mdp.transitions[1](id(t, 1), dest(0)) = 1.0;
    mdp.rewards(id(t, 1), 1) = -(0.2 + w);
    mdp.available[ix(id(t, 1))][1] = true;
  }
  mdp.transitions[0](terminal, terminal) = 1.0;
  // unavailable restore rows still need a distribution
  for (int t = 0; t < horizon; ++t) mdp.transitions[1].row(id(t, 0)) = mdp.transitions[0].row(id(t, 0));
  mdp.transitions[1](terminal, terminal) = 1.0;
  const auto vi = theory::value_iteration(mdp, 1e-10);
  const double optimal = vi.v[id(0, 1)];
  CHECK(optimal == doctest::Approx(-(0.2 + w)).epsilon(1e-8));

  BrConfig cfg;
  cfg.hidden = 32;
  cfg.warmup = 64;
  cfg.budget = 1500;
  const auto r = train_best_response(c, Mixture::pure(Agent{}), Role::kDefender, nullptr, nullptr, cfg, 11);

  Runner runner(&r.policy, Role::kDefender, nullptr, nullptr);
  auto s = env::reset(c, 99);
  runner.begin_episode();
  Rng rng(0);
  double ret = 0.0, discount = 1.0;
  bool done = false;
  while (!done) {
    const auto d = runner.decide(s, false, rng);
    const auto out = env::apply_step(s, {}, d.atoms);
    ret += discount * -out.reward;
    discount *= c.gamma;
    done = out.done;
  }
  MESSAGE("empirical " << ret << " optimal " << optimal);
  CHECK(std::abs(ret - optimal) <= 0.05 * std::abs(optimal));
}
