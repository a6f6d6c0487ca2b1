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


// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "commands.hpp"
#include "metadoar/theory.hpp"
#include "support/reference_cache.hpp"
#include "support/support_enumeration.hpp"

using namespace metadoar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// --- 1 and 2 -------------------------------------------------------------

struct Campaign {
  std::vector<theory::CampaignRow> rows;
  double seconds = 0.0;
};

const Campaign& campaign() {
  static const Campaign c = [] {
    Campaign out;
    const auto start = Clock::now();
    out.rows = theory::run_campaign(200, 20260, 1e-8, 20, 6, {0.9, 0.99});
    out.seconds = seconds_since(start);
    return out;
  }();
  return c;
}

Verdict theorem_bound() {
  const auto& c = campaign();
  int violations = 0, max_states = 0, max_actions = 0;
  std::set<double> gammas;
  double min_slack = 1e300;
  for (const auto& r : c.rows) {
    const bool holds = r.theorem.lhs <= r.theorem.gap / (1.0 - r.gamma) + 1e-8;
    violations += holds ? 0 : 1;
    max_states = std::max(max_states, r.n_states);
    max_actions = std::max(max_actions, r.n_actions);
    gammas.insert(r.gamma);
    min_slack = std::min(min_slack, r.theorem.slack);
  }
  Verdict v;
  v.pass = c.rows.size() >= 200 && violations == 0 && max_states <= 20 && max_actions <= 6 &&
           gammas == std::set<double>{0.9, 0.99} && c.seconds < 30.0;
  v.detail = std::to_string(c.rows.size()) + " instances, " + std::to_string(violations) +
             " violations, min slack " + fmt(min_slack) + ", " + fmt(c.seconds) + " s";
  return v;
}

Verdict lemma_bound() {
  const auto& c = campaign();
  int violations = 0;
  for (const auto& r : c.rows)
    violations += r.lemma.lhs <= r.lemma.gap / (1.0 - r.gamma) + 1e-8 ? 0 : 1;
  return {violations == 0, std::to_string(c.rows.size()) + " random policies, " +
                               std::to_string(violations) + " violations"};
}

// --- 3 -------------------------------------------------------------------

Verdict restricted_nash() {
  Rng rng(4242);
  double worst = 0.0;
  int missing = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd u(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) u(i, j) = 2.0 * uniform01(rng) - 1.0;
    const auto eq = game::solve_restricted(u);
    const auto ref = test_support::support_enumeration(u);
    if (!ref) {
      ++missing;
      continue;
    }
    worst = std::max(worst, std::abs(eq.value - ref->value));
  }
  Eigen::MatrixXd pennies(2, 2);
  pennies << 1, -1, -1, 1;
  const auto mp = game::solve_restricted(pennies);
  double mp_err = std::abs(mp.value);
  for (double p : mp.defender) mp_err = std::max(mp_err, std::abs(p - 0.5));
  for (double p : mp.attacker) mp_err = std::max(mp_err, std::abs(p - 0.5));
  return {missing == 0 && worst <= 1e-6 && mp_err <= 1e-9,
          "max value error " + fmt(worst) + " over 100 games, matching pennies error " + fmt(mp_err)};
}

// --- 4 -------------------------------------------------------------------

struct CacheRun {
  std::vector<std::vector<env::ActionAtom>> defender_atoms;
  std::vector<std::vector<env::ActionAtom>> attacker_atoms;
  long long hits = 0;
  long long lookups = 0;
};

// Both players decode through their own cache (or none) for `steps` steps.
CacheRun cache_episode(const std::optional<qcache::CacheConfig>& cache_config, int steps) {
  env::EnvConfig ec;
  ec.device_count = 12;
  ec.steps_per_episode = 100;
  ec.seed = 3;
  br::BrConfig bc;
  bc.hidden = 32;
  meta::MetaConfig mc;
  CacheRun out;
  std::vector<std::optional<qcache::QCache>> caches(2);
  std::vector<br::Policy> policies;
  std::vector<meta::MetaController> metas;
  for (Role role : {Role::kDefender, Role::kAttacker}) {
    const std::uint64_t stream = role == Role::kDefender ? 1 : 2;
    policies.push_back(br::Policy::random(ec, role, bc, mix_seed(77, stream)));
    mc.seed = mix_seed(78, stream);
    metas.emplace_back(ec.device_count, role, mc);
  }
  for (std::size_t i = 0; i < 2; ++i)
    if (cache_config) caches[i].emplace(*cache_config);
  br::Runner def(&policies[0], Role::kDefender, &metas[0], caches[0] ? &*caches[0] : nullptr);
  br::Runner att(&policies[1], Role::kAttacker, &metas[1], caches[1] ? &*caches[1] : nullptr);
  Rng rng(99);
  std::uint64_t episode = 0;
  auto state = env::reset(ec, mix_seed(5, episode));
  def.begin_episode();
  att.begin_episode();
  for (int t = 0; t < steps; ++t) {
    const auto d = def.decide(state, false, rng);
    const auto a = att.decide(state, false, rng);
    out.defender_atoms.push_back(d.atoms);
    out.attacker_atoms.push_back(a.atoms);
    const auto outcome = env::apply_step(state, a.atoms, d.atoms);
    def.after_step(outcome.changed, state);
    att.after_step(outcome.changed, state);
    if (outcome.done) {
      state = env::reset(ec, mix_seed(5, ++episode));
      def.begin_episode();
      att.begin_episode();
    }
  }
  for (const auto& c : caches)
    if (c) {
      out.hits += c->counters().hits;
      out.lookups += c->counters().hits + c->counters().misses;
    }
  return out;
}

bool reference_laws_hold() {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    qcache::CacheConfig c;
    c.capacity = 1 + uniform_index(rng, 12);
    c.ttl = trial % 2 ? std::optional<long long>(static_cast<long long>(uniform_index(rng, 10)))
                      : std::nullopt;
    c.flush_interval.reset();
    c.reeval_prob = 0.0;
    qcache::QCache cache(c);
    test_support::RefCache ref{c.capacity, c.ttl, {}, {}, 0};
    for (int op = 0; op < 2'000; ++op) {
      const int node = static_cast<int>(uniform_index(rng, 6));
      const auto state = static_cast<std::uint64_t>(uniform_index(rng, 4));
      const qcache::CacheKey key{state, node, env::ActionType::kNoop, std::nullopt, std::nullopt};
      const double roll = uniform01(rng);
      if (roll < 0.45) {
        const double q = uniform01(rng);
        cache.insert(key, q);
        ref.insert({node, state}, q);
      } else if (roll < 0.9) {
        if (cache.lookup(key) != ref.lookup({node, state})) return false;
      } else {
        cache.tick();
        ref.clock += 1;
      }
      if (cache.size() != ref.entries.size()) return false;
      const auto order = cache.recency_order();
      for (std::size_t i = 0; i < order.size(); ++i)
        if (std::make_pair(order[i].node, order[i].state_key) != ref.order[i]) return false;
    }
  }
  // invalidation against a BFS ball on random graphs
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(uniform_index(rng, 15));
    const auto adj = env::make_graph(env::GraphModel::kPreferentialAttachment, n, 1, 0, rng);
    qcache::CacheConfig c;
    c.khop_radius = static_cast<int>(uniform_index(rng, 3));
    qcache::QCache cache(c);
    for (int node = 0; node < n; ++node)
      cache.insert({0, node, env::ActionType::kNoop, std::nullopt, std::nullopt}, 1.0);
    const int changed = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    cache.invalidate_khop({changed}, adj);
    std::vector<int> dist(static_cast<std::size_t>(n), -1);
    std::vector<int> queue{changed};
    dist[static_cast<std::size_t>(changed)] = 0;
    for (std::size_t h = 0; h < queue.size(); ++h)
      for (int nb : adj[static_cast<std::size_t>(queue[h])])
        if (dist[static_cast<std::size_t>(nb)] < 0) {
          dist[static_cast<std::size_t>(nb)] = dist[static_cast<std::size_t>(queue[h])] + 1;
          queue.push_back(nb);
        }
    for (int node = 0; node < n; ++node) {
      const int d = dist[static_cast<std::size_t>(node)];
      const bool near = d >= 0 && d <= c.khop_radius;
      if (cache.contains({0, node, env::ActionType::kNoop, std::nullopt, std::nullopt}) == near)
        return false;
    }
  }
  return true;
}

Verdict cache_soundness() {
  qcache::CacheConfig strict;
  strict.quantization_decimals.reset();
  strict.reeval_prob = 0.0;
  strict.ttl.reset();
  strict.flush_interval.reset();
  strict.khop_radius = 12;  // at least the diameter of any 12-device graph
  const int steps = 1'000;
  const auto cached = cache_episode(strict, steps);
  const auto plain = cache_episode(std::nullopt, steps);
  int mismatches = 0;
  for (int t = 0; t < steps; ++t)
    if (cached.defender_atoms[t] != plain.defender_atoms[t] ||
        cached.attacker_atoms[t] != plain.attacker_atoms[t])
      ++mismatches;
  const auto defaults = cache_episode(qcache::CacheConfig{}, steps);
  const double rate = defaults.lookups ? static_cast<double>(defaults.hits) / defaults.lookups : 0.0;
  const bool laws = reference_laws_hold();
  return {mismatches == 0 && rate > 0.0 && laws,
          std::to_string(mismatches) + " mismatched steps of " + std::to_string(steps) + " (strict hits " +
              std::to_string(cached.hits) + "), default hit rate " + fmt(rate) +
              ", reference laws " + (laws ? "hold" : "broken")};
}

// --- 5 -------------------------------------------------------------------

Verdict pruning_cost() {
  const int expected[] = {1, 2, 3, 4};
  const int counts[] = {10, 100, 1000, 10000};
  bool k_ok = true;
  for (int i = 0; i < 4; ++i) k_ok = k_ok && meta::compute_k(counts[i], 1) == expected[i];

  cli::RunConfig config;
  config.wall_clock = true;
  const auto dir = cli::fs::temp_directory_path() / ("metadoar_acceptance_" + std::to_string(getpid())) / "scale";
  const auto rows = cli::cmd_scale(config, {10, 100, 1000, 10000}, dir);
  bool bound_ok = rows.size() == 8;
  std::string detail;
  for (const auto& r : rows) {
    bound_ok = bound_ok && r.bound_ok && r.status == "ok";
    if (r.role == "defender")
      detail += " M=" + std::to_string(r.devices) + ":" + std::to_string(r.critic_evals_max) + "/" +
                std::to_string(r.bound);
  }
  return {k_ok && bound_ok, std::string("k formula ") + (k_ok ? "ok" : "wrong") +
                                ", max critic evals/bound" + detail};
}

// --- 6 -------------------------------------------------------------------

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    p[i] = x[i] + h;
    const double up = f(p);
    p[i] = x[i] - h;
    const double down = f(p);
    p[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-8});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

std::vector<env::ActionAtom> sample_atoms(const std::vector<env::ActionAtom>& atoms, Rng& rng, double p) {
  std::vector<env::ActionAtom> out;
  for (const auto& a : atoms)
    if (uniform01(rng) < p) out.push_back(a);
  return out;
}

Verdict gradients() {
  Rng rng(606);
  double critic_worst = 0.0, actor_worst = 0.0, meta_worst = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    const Role role = instance % 2 ? Role::kAttacker : Role::kDefender;
    env::EnvConfig ec;
    ec.device_count = 2 + instance % 4;
    ec.exploit_catalog_size = 2;
    ec.steps_per_episode = 20;
    ec.seed = static_cast<std::uint64_t>(instance);
    br::BrConfig bc;
    bc.hidden = 6;
    auto policy = br::Policy::random(ec, role, bc, static_cast<std::uint64_t>(instance) + 100);
    for (nn::Mlp* net : {&policy.actor, &policy.critic, &policy.actor_target, &policy.critic_target})
      for (Eigen::Index i = 0; i < net->params().size(); ++i) net->params()[i] = uniform01(rng) - 0.5;

    std::vector<br::Transition> data;
    auto state = env::reset(ec, rng());
    for (int j = 0; j < 5; ++j) {
      const auto before = state;
      env::apply_step(state, sample_atoms(env::legal_actions(state, Role::kAttacker), rng, 0.5),
                      sample_atoms(env::legal_actions(state, Role::kDefender), rng, 0.2));
      const auto legal = env::legal_actions(before, role);
      auto next = std::make_shared<std::vector<env::ActionAtom>>(env::legal_actions(state, role));
      data.push_back(br::Transition{br::policy_input(env::observe(before, role)),
                                    br::encode_atom(legal[uniform_index(rng, legal.size())],
                                                    ec.device_count, ec.exploit_catalog_size),
                                    2.0 * uniform01(rng) - 1.0,
                                    br::policy_input(env::observe(state, role)), j == 4, next});
    }
    std::vector<const br::Transition*> batch;
    for (const auto& t : data) batch.push_back(&t);

    Eigen::VectorXd g;
    br::critic_loss(policy, batch, &g);
    critic_worst = std::max(critic_worst, relative_error(g, central_difference([&](const Eigen::VectorXd& p) {
      br::Policy copy = policy;
      copy.critic.params() = p;
      return br::critic_loss(copy, batch);
    }, policy.critic.params(), 1e-5)));
    br::actor_objective(policy, batch, &g);
    actor_worst = std::max(actor_worst, relative_error(g, central_difference([&](const Eigen::VectorXd& p) {
      br::Policy copy = policy;
      copy.actor.params() = p;
      return br::actor_objective(copy, batch);
    }, policy.actor.params(), 1e-5)));

    meta::MetaConfig mcfg;
    mcfg.embedding_dim = 5;
    mcfg.id_dim = 4;
    mcfg.node_hidden = 6;
    mcfg.state_hidden = 5;
    mcfg.seed = static_cast<std::uint64_t>(instance);
    meta::MetaController mc(ec.device_count, role, mcfg);
    auto params = mc.trainable_parameters();
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = uniform01(rng) - 0.5;
    mc.set_trainable_parameters(params);
    std::vector<meta::MetaTransition> mdata;
    auto s = env::reset(ec, rng());
    for (int j = 0; j < 4; ++j) {
      env::apply_step(s, sample_atoms(env::legal_actions(s, Role::kAttacker), rng, 0.5), {});
      meta::MetaTransition t;
      t.observation = env::observe(s, role).values;
      t.next_observation = t.observation;
      for (int node = 0; node < ec.device_count; ++node)
        if (node == j % ec.device_count || uniform01(rng) < 0.3) t.selected.push_back(node);
      t.selected_features.resize(mc.feature_size(), static_cast<Eigen::Index>(t.selected.size()));
      for (std::size_t c = 0; c < t.selected.size(); ++c)
        t.selected_features.col(static_cast<Eigen::Index>(c)) = mc.node_features(s, t.selected[c]);
      t.reward = 2.0 * uniform01(rng) - 1.0;
      mdata.push_back(std::move(t));
    }
    std::vector<const meta::MetaTransition*> mbatch;
    for (const auto& t : mdata) mbatch.push_back(&t);
    Eigen::VectorXd mg;
    mc.loss_and_gradient(mbatch, mg);
    meta_worst = std::max(meta_worst, relative_error(mg, central_difference([&](const Eigen::VectorXd& p) {
      meta::MetaController copy = mc;
      copy.set_trainable_parameters(p);
      return copy.loss(mbatch);
    }, params, 1e-5)));
  }
  return {critic_worst <= 1e-4 && actor_worst <= 1e-4 && meta_worst <= 1e-4,
          "max relative error critic " + fmt(critic_worst) + ", actor " + fmt(actor_worst) +
              ", meta " + fmt(meta_worst) + " over 20 instances"};
}

// --- 7 -------------------------------------------------------------------

struct ModeResult {
  std::vector<double> per_device;
  bool stable = true;
  int max_iterations_seen = 0;
  double seconds = 0.0;
};

ModeResult run_mode(bool use_meta) {
  ModeResult out;
  const auto start = Clock::now();
  for (std::uint64_t seed : {0ULL, 1ULL}) {
    game::DoConfig c;
    c.env.device_count = 10;
    c.use_meta = use_meta;
    c.use_cache = use_meta;
    c.seed = seed;
    const auto result = game::run_double_oracle(c);
    out.per_device.push_back(result.game.game_value() / 10.0);
    const int n = static_cast<int>(result.log.size());
    out.max_iterations_seen = std::max(out.max_iterations_seen, n);
    // last three value changes below the stopping threshold
    bool stable = n >= 4 && n <= 15;
    for (int i = std::max(1, n - 3); stable && i < n; ++i) {
      const double prev = result.log[static_cast<std::size_t>(i - 1)].value;
      stable = std::abs(result.log[static_cast<std::size_t>(i)].value - prev) < c.stop.threshold(prev);
    }
    out.stable = out.stable && stable;
    std::cerr << "  [7] " << (use_meta ? "meta" : "no-meta") << " seed " << seed << ": " << n
              << " iterations, value per device " << result.game.game_value() / 10.0
              << (stable ? ", stable" : ", not stable") << ", values";
    for (const auto& row : result.log) std::cerr << ' ' << row.value;
    std::cerr << '\n';
  }
  out.seconds = seconds_since(start);
  return out;
}

std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double n = static_cast<double>(xs.size());
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

Verdict do_convergence() {
  const auto with_meta = run_mode(true);
  const auto without = run_mode(false);
  const auto [mm, ms] = mean_stderr(with_meta.per_device);
  const auto [nm, ns] = mean_stderr(without.per_device);
  const double pooled = std::sqrt(ms * ms + ns * ns);
  const bool ordering = mm >= nm - pooled;
  const double minutes = (with_meta.seconds + without.seconds) / 60.0;
  return {with_meta.stable && without.stable && ordering && minutes < 20.0,
          std::string("stable meta ") + (with_meta.stable ? "yes" : "no") + ", no-meta " +
              (without.stable ? "yes" : "no") +
              ", value per device meta " + fmt(mm) + " +- " + fmt(ms) + " vs no-meta " + fmt(nm) +
              " +- " + fmt(ns) + " (need meta >= " + fmt(nm - pooled) + "), " + fmt(minutes) + " min"};
}

// --- 8 -------------------------------------------------------------------

Verdict experiment_designs() {
  cli::RunConfig c;
  c.run.env.device_count = 4;
  c.run.env.steps_per_episode = 6;
  c.run.br.hidden = 8;
  c.run.br.budget = 24;
  c.run.br.warmup = 8;
  c.run.br.batch_size = 4;
  c.run.meta.embedding_dim = 4;
  c.run.meta.id_dim = 4;
  c.run.meta.batch_size = 4;
  c.run.stop.min_iterations = 1;
  c.run.stop.max_iterations = 1;
  c.run.episodes_per_cell = 2;
  const auto root = cli::fs::temp_directory_path() / ("metadoar_acceptance_" + std::to_string(getpid()));
  const auto solve = cli::cmd_solve(c, root / "solve");
  const auto alpha = cli::cmd_ablate(c, cli::AblateParam::kAlpha, {1, 5, 50}, root / "alpha");
  const auto khop = cli::cmd_ablate(c, cli::AblateParam::kKhop, {1, 4, 10}, root / "khop");
  bool ok = solve.ok() && solve.runs.size() == 2 && std::isfinite(solve.utility_stderr);
  ok = ok && alpha.size() == 3 && khop.size() == 3;
  for (const auto& r : alpha) ok = ok && r.status == "ok";
  for (const auto& r : khop) ok = ok && r.status == "ok";
  return {ok, "designs only (2 seeds, alpha {1,5,50}, khop {1,4,10}, per-device utility); "
              "absolute utilities, timings and memory figures are not targets"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
  };
  const Criterion all[] = {
      {1, "pruned-greedy value bound", theorem_bound},
      {2, "Q-gap value bound for arbitrary policies", lemma_bound},
      {3, "restricted Nash solver", restricted_nash},
      {4, "cache soundness and laws", cache_soundness},
      {5, "k formula and decode cost", pruning_cost},
      {6, "gradient correctness", gradients},
      {7, "double oracle convergence at M=10", do_convergence},
      {8, "experiment designs", experiment_designs},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s: %s\n", c.id, v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
