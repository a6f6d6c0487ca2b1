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

#include "metadoar/game.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

namespace metadoar::game {
namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

constexpr double kPivotEps = 1e-12;
constexpr double kMaxExploitability = 1e-6;

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::shared_ptr<const meta::MetaController> snapshot(const meta::MetaController& mc) {
  auto copy = std::make_shared<meta::MetaController>(mc);
  copy->clear_replay();
  return copy;
}

}  // namespace

const CellEstimate& PayoffMatrix::cell(int i, int j) const {
  if (i < 0 || i >= rows() || j < 0 || j >= cols_) throw Error("PayoffMatrix: index out of range");
  return cells_[idx(i)][idx(j)];
}

Eigen::MatrixXd PayoffMatrix::values() const {
  Eigen::MatrixXd u(rows(), cols_);
  for (int i = 0; i < rows(); ++i)
    for (int j = 0; j < cols_; ++j) u(i, j) = cells_[idx(i)][idx(j)].mean;
  return u;
}

void PayoffMatrix::add_row(std::vector<CellEstimate> row) {
  if (rows() == 0) {
    if (row.size() != 1) throw Error("PayoffMatrix: first row must hold one cell");
    cols_ = 1;
  } else if (static_cast<int>(row.size()) != cols_) {
    throw Error("PayoffMatrix: row length mismatch");
  }
  cells_.push_back(std::move(row));
}

void PayoffMatrix::add_column(std::vector<CellEstimate> column) {
  if (rows() == 0) {
    if (column.size() != 1) throw Error("PayoffMatrix: first column must hold one cell");
    cells_.emplace_back();
  } else if (static_cast<int>(column.size()) != rows()) {
    throw Error("PayoffMatrix: column length mismatch");
  }
  for (int i = 0; i < rows(); ++i) cells_[idx(i)].push_back(column[idx(i)]);
  ++cols_;
}

void PayoffMatrix::replace(int i, int j, CellEstimate c) {
  cell(i, j);
  cells_[idx(i)][idx(j)] = c;
}

double exploitability(const Eigen::MatrixXd& u, const std::vector<double>& x,
                      const std::vector<double>& y) {
  if (static_cast<Eigen::Index>(x.size()) != u.rows() || static_cast<Eigen::Index>(y.size()) != u.cols())
    throw Error("exploitability: mixture size mismatch");
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), u.rows());
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), u.cols());
  return (u * yv).maxCoeff() - (u.transpose() * xv).minCoeff();
}

Equilibrium solve_restricted(const Eigen::MatrixXd& u) {
  if (u.size() == 0) throw Error("solve_restricted: empty matrix");
  if (!u.allFinite()) throw Error("solve_restricted: non-finite payoff");
  const Eigen::Index m = u.rows();
  const Eigen::Index n = u.cols();
  // Shift to a strictly positive game, then
  //   maximize sum(q) s.t. U' q <= 1, q >= 0.
  // The optimum is 1 / v'; q scaled to sum 1 is the column strategy and the
  // duals scaled the same way are the row strategy.
  const double shift = 1.0 - u.minCoeff();
  const Eigen::Index width = n + m + 1;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, width);
  t.topLeftCorner(m, n) = u.array() + shift;
  t.block(0, n, m, m).setIdentity();
  t.col(width - 1).head(m).setOnes();
  t.row(m).head(n).setConstant(-1.0);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;

  for (;;) {
    Eigen::Index enter = -1;
    for (Eigen::Index c = 0; c < n + m; ++c) {
      if (t(m, c) < -kPivotEps) {
        enter = c;
        break;
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (t(i, enter) <= kPivotEps) continue;
      const double ratio = t(i, width - 1) / t(i, enter);
      if (leave < 0 || ratio < best - kPivotEps ||
          (std::abs(ratio - best) <= kPivotEps &&
           basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
        leave = i;
        best = ratio;
      }
    }
    if (leave < 0) throw Error("solve_restricted: unbounded program");
    t.row(leave) /= t(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double f = t(i, enter);
      if (f != 0.0) t.row(i) -= f * t.row(leave);
    }
    basis[static_cast<std::size_t>(leave)] = enter;
  }

  Equilibrium eq;
  eq.attacker.assign(static_cast<std::size_t>(n), 0.0);
  eq.defender.assign(static_cast<std::size_t>(m), 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index b = basis[static_cast<std::size_t>(i)];
    if (b < n) eq.attacker[static_cast<std::size_t>(b)] = std::max(0.0, t(i, width - 1));
  }
  for (Eigen::Index i = 0; i < m; ++i)
    eq.defender[static_cast<std::size_t>(i)] = std::max(0.0, t(m, n + i));
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (!(s > 0.0)) throw Error("solve_restricted: degenerate solution");
    for (double& x : v) x /= s;
  };
  normalize(eq.attacker);
  normalize(eq.defender);
  const Eigen::Map<const Eigen::VectorXd> x(eq.defender.data(), m);
  const Eigen::Map<const Eigen::VectorXd> y(eq.attacker.data(), n);
  eq.value = x.dot(u * y);
  eq.exploitability = exploitability(u, eq.defender, eq.attacker);
  return eq;
}

CellEstimate estimate_payoff(const br::Agent& defender, const br::Agent& attacker,
                             const env::EnvConfig& env_config, int episodes, std::uint64_t seed,
                             const std::optional<qcache::CacheConfig>& cache) {
  if (episodes < 1) throw Error("estimate_payoff: episodes must be >= 1");
  br::AgentRunner d(defender, Role::kDefender, cache);
  br::AgentRunner a(attacker, Role::kAttacker, cache);
  std::vector<double> returns;
  for (int ep = 0; ep < episodes; ++ep) {
    env::NetworkState state = env::reset(env_config, mix_seed(seed, idx(ep)));
    Rng rng(mix_seed(seed, idx(ep), 1));
    d.runner().begin_episode();
    a.runner().begin_episode();
    double total = 0.0;
    double discount = 1.0;
    bool done = false;
    while (!done) {
      auto dd = d.runner().decide(state, false, rng);
      auto ad = a.runner().decide(state, false, rng);
      const auto outcome = env::apply_step(state, ad.atoms, dd.atoms);
      total -= discount * outcome.reward;
      discount *= env_config.gamma;
      done = outcome.done;
      d.runner().after_step(outcome.changed, state);
      a.runner().after_step(outcome.changed, state);
    }
    returns.push_back(total);
  }
  CellEstimate c;
  c.episodes = episodes;
  c.seed = seed;
  double sum = 0.0;
  for (double r : returns) sum += r;
  c.mean = sum / episodes;
  if (episodes > 1) {
    double ss = 0.0;
    for (double r : returns) ss += (r - c.mean) * (r - c.mean);
    c.stderr_ = std::sqrt(ss / (episodes - 1) / episodes);
  }
  return c;
}

void write_iteration_header(std::ostream& out) {
  out << "iteration,value,value_per_device,defender_policies,attacker_policies,wall_ms,"
         "cache_hits,cache_misses\n";
}

void write_iteration_row(std::ostream& out, const IterationLog& r) {
  out << r.iteration << ',' << r.value << ',' << r.value_per_device << ',' << r.defender_policies
      << ',' << r.attacker_policies << ',' << r.wall_ms << ',' << r.cache_hits << ','
      << r.cache_misses << '\n';
}

void StopRule::validate() const {
  if (min_iterations < 0) throw Error("do.min_iterations: must be >= 0");
  if (max_iterations < 1) throw Error("do.max_iterations: must be a positive integer");
  if (min_iterations > max_iterations) throw Error("do.min_iterations: must not exceed max_iterations");
  if (!(relative >= 0.0)) throw Error("do.eps_relative: must be >= 0");
  if (!(absolute >= 0.0)) throw Error("do.eps_absolute: must be >= 0");
}

DoOutcome double_oracle(const StopRule& rule, const Oracle& oracle, int device_count,
                        const std::function<void(const IterationLog&)>& on_iteration) {
  rule.validate();
  if (device_count < 1) throw Error("double_oracle: device count must be >= 1");
  auto evaluate = [&](const std::vector<std::pair<int, int>>& cells) {
    if (oracle.payoffs) return oracle.payoffs(cells);
    std::vector<CellEstimate> out;
    for (auto [i, j] : cells) out.push_back(oracle.payoff(i, j));
    return out;
  };
  auto solve = [](const PayoffMatrix& p) {
    Equilibrium eq = solve_restricted(p.values());
    if (eq.exploitability > kMaxExploitability)
      throw Error("double_oracle: restricted solve exploitable by " + std::to_string(eq.exploitability));
    return eq;
  };

  DoOutcome out;
  out.payoff.add_row(evaluate({{0, 0}}));
  out.equilibrium = solve(out.payoff);
  for (int it = 1; it <= rule.max_iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const Equilibrium prev = out.equilibrium;
    const int nd = out.payoff.rows();
    const int na = out.payoff.cols();
    const BrReport rd = oracle.best_response(Role::kDefender, prev.attacker, it);
    const BrReport ra = oracle.best_response(Role::kAttacker, prev.defender, it);

    std::vector<std::pair<int, int>> cells;
    for (int j = 0; j < na; ++j) cells.emplace_back(nd, j);
    for (int i = 0; i <= nd; ++i) cells.emplace_back(i, na);
    const auto fill_start = std::chrono::steady_clock::now();
    auto estimates = evaluate(cells);
    const double fill_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - fill_start).count();
    out.payoff.add_row(std::vector<CellEstimate>(estimates.begin(), estimates.begin() + na));
    out.payoff.add_column(std::vector<CellEstimate>(estimates.begin() + na, estimates.end()));

    IterationLog row;
    row.iteration = it;
    row.payoff_wall_ms = fill_ms;
    for (int j = 0; j < na; ++j) row.defender_gain += prev.attacker[idx(j)] * out.payoff.value(nd, j);
    row.defender_gain -= prev.value;
    row.attacker_gain = prev.value;
    for (int i = 0; i < nd; ++i) row.attacker_gain -= prev.defender[idx(i)] * out.payoff.value(i, na);
    row.epsilon = rule.threshold(prev.value);

    out.equilibrium = solve(out.payoff);
    row.value = out.equilibrium.value;
    row.value_per_device = row.value / device_count;
    row.defender_policies = out.payoff.rows();
    row.attacker_policies = out.payoff.cols();
    row.cache_hits = rd.cache_hits + ra.cache_hits;
    row.cache_misses = rd.cache_misses + ra.cache_misses;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.log.push_back(row);
    if (on_iteration) on_iteration(row);
    if (it >= rule.min_iterations && row.defender_gain <= row.epsilon &&
        row.attacker_gain <= row.epsilon) {
      out.converged = true;
      break;
    }
  }
  return out;
}

void DoConfig::validate() const {
  env.validate();
  br.validate();
  meta.validate();
  cache.validate();
  stop.validate();
  if (episodes_per_cell < 1) throw Error("do.episodes_per_cell: must be a positive integer");
  if (threads < 1) throw Error("run.parallel: must be a positive integer");
}

br::Mixture RestrictedGame::defender_mixture() const {
  return br::Mixture{defenders, equilibrium.defender};
}

br::Mixture RestrictedGame::attacker_mixture() const {
  return br::Mixture{attackers, equilibrium.attacker};
}

std::uint64_t cell_seed(std::uint64_t run_seed, int defender, int attacker) {
  return mix_seed(mix_seed(run_seed, 0xCE11), idx(defender), idx(attacker));
}

DoResult run_double_oracle(const DoConfig& config,
                           const std::function<void(const IterationLog&)>& on_iteration) {
  config.validate();
  const int m = config.env.device_count;
  auto role_stream = [](Role r) -> std::uint64_t { return r == Role::kDefender ? 0 : 1; };

  std::optional<meta::MetaController> meta_d, meta_a;
  if (config.use_meta) {
    meta::MetaConfig mc = config.meta;
    mc.seed = mix_seed(config.seed, 0x3E7A, role_stream(Role::kDefender));
    meta_d.emplace(m, Role::kDefender, mc);
    mc.seed = mix_seed(config.seed, 0x3E7A, role_stream(Role::kAttacker));
    meta_a.emplace(m, Role::kAttacker, mc);
  }
  auto meta_for = [&](Role r) -> meta::MetaController* {
    auto& slot = r == Role::kDefender ? meta_d : meta_a;
    return slot ? &*slot : nullptr;
  };

  DoResult result;
  RestrictedGame& game = result.game;
  auto make_agent = [&](Role r, br::Policy policy, int index) {
    br::Agent a;
    a.policy = std::make_shared<const br::Policy>(std::move(policy));
    if (auto* mc = meta_for(r)) a.meta = snapshot(*mc);
    a.label = std::string(r == Role::kDefender ? "D" : "A") + std::to_string(index);
    return a;
  };
  for (Role r : {Role::kDefender, Role::kAttacker}) {
    auto initial = br::Policy::random(config.env, r, config.br, mix_seed(config.seed, 0x1A17, role_stream(r)));
    (r == Role::kDefender ? game.defenders : game.attackers).push_back(make_agent(r, std::move(initial), 0));
  }

  const std::optional<qcache::CacheConfig> eval_cache =
      config.use_cache ? std::optional<qcache::CacheConfig>(config.cache) : std::nullopt;

  Oracle oracle;
  oracle.best_response = [&](Role role, const std::vector<double>& mix, int iteration) {
    const auto& opponents = role == Role::kDefender ? game.attackers : game.defenders;
    // The opponent list may already hold this iteration's new entry.
    br::Mixture opponent{{opponents.begin(), opponents.begin() + static_cast<std::ptrdiff_t>(mix.size())}, mix};
    std::optional<qcache::QCache> cache;
    if (config.use_cache) {
      qcache::CacheConfig cc = config.cache;
      cc.seed = mix_seed(mix_seed(config.seed, 0xCAC4E), idx(iteration), role_stream(role));
      cache.emplace(cc);
    }
    const auto seed = mix_seed(mix_seed(config.seed, 0xB4), idx(iteration), role_stream(role));
    auto trained = br::train_best_response(config.env, opponent, role, meta_for(role),
                                           cache ? &*cache : nullptr, config.br, seed);
    auto& list = role == Role::kDefender ? game.defenders : game.attackers;
    list.push_back(make_agent(role, std::move(trained.policy), static_cast<int>(list.size())));
    BrReport report;
    if (cache) {
      report.cache_hits = cache->counters().hits;
      report.cache_misses = cache->counters().misses;
    }
    return report;
  };
  oracle.payoffs = [&](const std::vector<std::pair<int, int>>& cells) {
    std::vector<CellEstimate> out(cells.size());
    parallel_for(cells.size(), config.threads, [&](std::size_t k) {
      const auto [i, j] = cells[k];
      out[k] = estimate_payoff(game.defenders[idx(i)], game.attackers[idx(j)], config.env,
                               config.episodes_per_cell, cell_seed(config.seed, i, j), eval_cache);
    });
    return out;
  };

  DoOutcome outcome = double_oracle(config.stop, oracle, m, on_iteration);
  game.payoff = std::move(outcome.payoff);
  game.equilibrium = std::move(outcome.equilibrium);
  result.log = std::move(outcome.log);
  result.converged = outcome.converged;
  return result;
}

}  // namespace metadoar::game
