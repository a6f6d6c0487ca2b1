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


#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

#include <unistd.h>

#include "json.hpp"
#include "metadoar/theory.hpp"

namespace metadoar::cli {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs fn(0..n-1) on up to `threads` workers. Exceptions are the callee's job.
void run_indexed(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  return out;
}

void save_agent(const br::Agent& agent, const fs::path& dir) {
  if (agent.policy) {
    std::ofstream out(dir / (agent.label + ".mdpl"), std::ios::binary);
    agent.policy->save(out);
  }
  if (agent.meta) {
    std::ofstream out(dir / (agent.label + ".mdmc"), std::ios::binary);
    agent.meta->save(out);
  }
}

void write_game(const game::RestrictedGame& g, const fs::path& dir) {
  {
    auto out = open_out(dir / "payoff.csv");
    out << "defender,attacker,mean,stderr,episodes,seed\n";
    for (int i = 0; i < g.payoff.rows(); ++i)
      for (int j = 0; j < g.payoff.cols(); ++j) {
        const auto& c = g.payoff.cell(i, j);
        out << i << ',' << j << ',' << c.mean << ',' << c.stderr_ << ',' << c.episodes << ','
            << c.seed << '\n';
      }
  }
  {
    auto out = open_out(dir / "equilibrium.csv");
    out << "role,index,label,probability\n";
    for (std::size_t i = 0; i < g.defenders.size(); ++i)
      out << "defender," << i << ',' << g.defenders[i].label << ',' << g.equilibrium.defender[i] << '\n';
    for (std::size_t j = 0; j < g.attackers.size(); ++j)
      out << "attacker," << j << ',' << g.attackers[j].label << ',' << g.equilibrium.attacker[j] << '\n';
  }
  const fs::path policies = dir / "policies";
  fs::create_directories(policies);
  for (const auto& a : g.defenders) save_agent(a, policies);
  for (const auto& a : g.attackers) save_agent(a, policies);
}

SeedRun solve_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir) {
  SeedRun run;
  run.seed = seed;
  run.memory_proxy_mb = resident_memory_mb();
  const auto start = Clock::now();
  try {
    fs::create_directories(dir);
    game::DoConfig dc = config.run;
    dc.seed = seed;
    auto log = open_out(dir / "iterations.csv");
    game::write_iteration_header(log);
    log.flush();
    auto on_iteration = [&](const game::IterationLog& row) {
      game::IterationLog shown = row;
      if (!config.wall_clock) shown.wall_ms = 0.0;
      game::write_iteration_row(log, shown);
      log.flush();
      run.iterations = row.iteration;
      run.payoff_wall_ms += row.payoff_wall_ms;
      run.cache_hits += row.cache_hits;
      run.cache_misses += row.cache_misses;
      run.memory_proxy_mb = std::max(run.memory_proxy_mb, resident_memory_mb());
    };
    const auto result = game::run_double_oracle(dc, on_iteration);
    run.value = result.game.game_value();
    run.value_per_device = run.value / dc.env.device_count;
    run.converged = result.converged;
    write_game(result.game, dir);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.wall_ms = ms_since(start);
  if (!config.wall_clock) {
    run.wall_ms = 0.0;
    run.payoff_wall_ms = 0.0;
  }
  return run;
}

std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double n = static_cast<double>(xs.size());
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

double resident_memory_mb() {
  std::ifstream statm("/proc/self/statm");
  long long pages_total = 0, pages_resident = 0;
  if (!(statm >> pages_total >> pages_resident)) return 0.0;
  return static_cast<double>(pages_resident) * static_cast<double>(sysconf(_SC_PAGESIZE)) / (1024.0 * 1024.0);
}

bool SolveReport::ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.error.empty(); });
}

SolveReport cmd_solve(const RunConfig& config, const fs::path& out) {
  config.validate();
  fs::create_directories(out);
  {
    std::ofstream echo(out / "config.ini");
    write_config(echo, config);
  }
  SolveReport report;
  report.runs.resize(static_cast<std::size_t>(config.seeds));
  run_indexed(report.runs.size(), config.parallel, [&](std::size_t i) {
    const std::uint64_t seed = config.run.seed + i;
    report.runs[i] = solve_seed(config, seed, out / ("seed_" + std::to_string(seed)));
  });

  std::vector<double> utilities;
  for (const auto& r : report.runs)
    if (r.error.empty()) utilities.push_back(r.value_per_device);
  std::tie(report.utility_mean, report.utility_stderr) = mean_stderr(utilities);

  nlohmann::json j;
  j["devices"] = config.run.env.device_count;
  j["utility_per_device_mean"] = report.utility_mean;
  j["utility_per_device_stderr"] = report.utility_stderr;
  j["utility_note"] = "defender restricted-game value divided by the device count";
  j["memory_note"] = "resident set size proxy from /proc/self/statm, process wide";
  for (const auto& r : report.runs) {
    nlohmann::json row;
    row["seed"] = r.seed;
    row["value"] = r.value;
    row["value_per_device"] = r.value_per_device;
    row["iterations"] = r.iterations;
    row["converged"] = r.converged;
    row["wall_ms"] = r.wall_ms;
    row["payoff_wall_ms"] = r.payoff_wall_ms;
    row["cache_hits"] = r.cache_hits;
    row["cache_misses"] = r.cache_misses;
    row["memory_proxy_mb"] = r.memory_proxy_mb;
    if (!r.error.empty()) row["error"] = r.error;
    j["runs"].push_back(row);
  }
  std::ofstream(out / "report.json") << j.dump(2) << '\n';
  return report;
}

AblateParam parse_ablate_param(const std::string& name) {
  if (name == "alpha") return AblateParam::kAlpha;
  if (name == "khop") return AblateParam::kKhop;
  throw Error("ablate: --param must be alpha or khop, got '" + name + "'");
}

std::vector<AblateRow> cmd_ablate(const RunConfig& config, AblateParam param,
                                  const std::vector<int>& values, const fs::path& out) {
  if (values.empty()) throw Error("ablate: --values must not be empty");
  config.validate();
  fs::create_directories(out);
  const std::string name = param == AblateParam::kAlpha ? "alpha" : "khop";
  auto csv = open_out(out / ("ablate_" + name + ".csv"));
  csv << "value,utility_mean,utility_stderr,payoff_wall_ms,peak_memory_proxy_mb,status\n";
  csv.flush();
  std::mutex csv_mu;

  std::vector<AblateRow> rows(values.size());
  run_indexed(values.size(), config.parallel, [&](std::size_t i) {
    AblateRow& row = rows[i];
    row.value = values[i];
    try {
      RunConfig c = config;
      c.parallel = 1;
      if (param == AblateParam::kAlpha) c.run.meta.alpha = values[i];
      else c.run.cache.khop_radius = values[i];
      const auto report = cmd_solve(c, out / (name + "_" + std::to_string(values[i])));
      row.utility_mean = report.utility_mean;
      row.utility_stderr = report.utility_stderr;
      double payoff_ms = 0.0;
      for (const auto& r : report.runs) {
        payoff_ms += r.payoff_wall_ms;
        row.memory_proxy_mb = std::max(row.memory_proxy_mb, r.memory_proxy_mb);
        if (!r.error.empty() && row.status == "ok") row.status = "error: " + r.error;
      }
      row.payoff_wall_ms = payoff_ms / static_cast<double>(report.runs.size());
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
    }
    std::replace(row.status.begin(), row.status.end(), ',', ';');
    std::lock_guard<std::mutex> lock(csv_mu);
    csv << row.value << ',' << row.utility_mean << ',' << row.utility_stderr << ','
        << row.payoff_wall_ms << ',' << row.memory_proxy_mb << ',' << row.status << '\n';
    csv.flush();
  });
  return rows;
}

namespace {

ScaleRow scale_one(const RunConfig& config, int devices, Role role) {
  ScaleRow row;
  row.devices = devices;
  row.role = role == Role::kDefender ? "defender" : "attacker";
  row.greedy_k = config.run.br.greedy_k;
  try {
    env::EnvConfig ec = config.run.env;
    ec.device_count = devices;
    ec.validate();
    row.k = meta::compute_k(devices, config.run.meta.alpha);
    row.bound = static_cast<long long>(row.k) * row.greedy_k;
    const std::uint64_t seed = mix_seed(config.run.seed, 0x5CA1E, static_cast<std::uint64_t>(devices));
    const std::uint64_t role_stream = role == Role::kDefender ? 0 : 1;
    const br::Policy policy = br::Policy::random(ec, role, config.run.br, mix_seed(seed, 1, role_stream));
    std::optional<meta::MetaController> mc;
    if (config.run.use_meta) {
      meta::MetaConfig m = config.run.meta;
      m.seed = mix_seed(seed, 2, role_stream);
      mc.emplace(devices, role, m);
    }
    std::optional<qcache::QCache> cache;
    if (config.run.use_cache) {
      qcache::CacheConfig cc = config.run.cache;
      cc.seed = mix_seed(seed, 3, role_stream);
      cache.emplace(cc);
    }
    br::Runner runner(&policy, role, mc ? &*mc : nullptr, cache ? &*cache : nullptr);
    Rng rng(mix_seed(seed, 4, role_stream));
    std::uint64_t episode = 0;
    env::NetworkState state = env::reset(ec, mix_seed(seed, 5, episode));
    runner.begin_episode();
    double total_ms = 0.0;
    long long total_evals = 0;
    for (int i = 0; i < config.scale_decodes; ++i) {
      br::DecodeStats stats;
      const auto start = Clock::now();
      const auto decision = runner.decide(state, false, rng, &stats);
      total_ms += ms_since(start);
      total_evals += stats.critic_evaluations;
      row.critic_evals_max = std::max(row.critic_evals_max, stats.critic_evaluations);
      const std::vector<env::ActionAtom> none;
      const auto outcome = role == Role::kAttacker ? env::apply_step(state, decision.atoms, none)
                                                   : env::apply_step(state, none, decision.atoms);
      runner.after_step(outcome.changed, state);
      if (outcome.done) {
        state = env::reset(ec, mix_seed(seed, 5, ++episode));
        runner.begin_episode();
      }
    }
    row.decodes = config.scale_decodes;
    row.decode_ms_mean = config.wall_clock ? total_ms / row.decodes : 0.0;
    row.critic_evals_mean = static_cast<double>(total_evals) / row.decodes;
    row.memory_proxy_mb = resident_memory_mb();
    row.bound_ok = row.critic_evals_max <= row.bound;
    if (!row.bound_ok) row.status = "bound exceeded";
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
    std::replace(row.status.begin(), row.status.end(), ',', ';');
  }
  return row;
}

}  // namespace

std::vector<ScaleRow> cmd_scale(const RunConfig& config, const std::vector<int>& device_counts,
                                const fs::path& out) {
  if (device_counts.empty()) throw Error("scale: --devices must not be empty");
  config.validate();
  fs::create_directories(out);
  auto csv = open_out(out / "scale.csv");
  csv << "devices,role,k,greedy_k,bound,decodes,decode_ms_mean,critic_evals_mean,"
         "critic_evals_max,memory_proxy_mb,bound_ok,status\n";
  csv.flush();
  std::vector<ScaleRow> rows;
  for (int m : device_counts) {
    for (Role role : {Role::kDefender, Role::kAttacker}) {
      const ScaleRow r = scale_one(config, m, role);
      csv << r.devices << ',' << r.role << ',' << r.k << ',' << r.greedy_k << ',' << r.bound << ','
          << r.decodes << ',' << r.decode_ms_mean << ',' << r.critic_evals_mean << ','
          << r.critic_evals_max << ',' << r.memory_proxy_mb << ',' << (r.bound_ok ? 1 : 0) << ','
          << r.status << '\n';
      csv.flush();
      rows.push_back(r);
    }
  }
  return rows;
}

TheorySummary cmd_verify_theory(const RunConfig& config, const fs::path& out) {
  config.validate();
  fs::create_directories(out);
  auto csv = open_out(out / "theory.csv");
  theory::write_campaign_header(csv);
  csv.flush();
  auto witnesses = open_out(out / "theory_witnesses.txt");
  TheorySummary summary;
  auto on_row = [&](const theory::CampaignRow& row) {
    theory::write_campaign_row(csv, row);
    csv.flush();
    ++summary.instances;
    for (const auto* b : {&row.theorem, &row.lemma}) {
      if (b->holds) continue;
      ++summary.violations;
      witnesses << "instance " << row.instance << ' ' << (b == &row.theorem ? "theorem" : "lemma")
                << ": states " << row.n_states << " actions " << row.n_actions << " gamma "
                << row.gamma << " witness state " << b->witness_state << " lhs " << b->lhs
                << " rhs " << b->rhs << " slack " << b->slack << '\n';
      witnesses.flush();
    }
  };
  theory::run_campaign(config.theory_instances, config.run.seed, config.theory_tol,
                       config.theory_max_states, config.theory_max_actions, {0.9, 0.99},
                       config.theory_unpruned, on_row);
  return summary;
}

}  // namespace metadoar::cli
