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

// Double Oracle over learned policies.
//
// The restricted game is a zero-sum matrix game with the defender as row
// (maximizing) player. Cells are Monte Carlo estimates of the defender's
// discounted utility. Each iteration solves the restricted game exactly,
// trains one best response per role against the opponent's equilibrium
// mixture and appends the corresponding row and column.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "metadoar/br.hpp"
#include "metadoar/env.hpp"
#include "metadoar/meta.hpp"
#include "metadoar/qcache.hpp"

namespace metadoar::game {

struct CellEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;  // 0 when episodes == 1
  int episodes = 0;
  std::uint64_t seed = 0;
};

// u[i][j]: defender row i against attacker column j. Grows by appending.
class PayoffMatrix {
 public:
  int rows() const { return static_cast<int>(cells_.size()); }
  int cols() const { return cols_; }
  const CellEstimate& cell(int i, int j) const;
  double value(int i, int j) const { return cell(i, j).mean; }
  Eigen::MatrixXd values() const;

  // The first append on an empty matrix must be a single cell.
  void add_row(std::vector<CellEstimate> row);
  void add_column(std::vector<CellEstimate> column);
  // Explicit re-estimate of an existing cell.
  void replace(int i, int j, CellEstimate cell);

 private:
  std::vector<std::vector<CellEstimate>> cells_;
  int cols_ = 0;
};

struct Equilibrium {
  std::vector<double> defender;  // row mixture
  std::vector<double> attacker;  // column mixture
  double value = 0.0;            // defender . U . attacker
  double exploitability = 0.0;
};

// max_i (U y)_i - min_j (x^T U)_j, the sum of both players' deviation gains.
double exploitability(const Eigen::MatrixXd& u, const std::vector<double>& x,
                      const std::vector<double>& y);

// Exact minimax solution by the simplex method with Bland's rule. Throws
// Error on empty or non-finite input.
Equilibrium solve_restricted(const Eigen::MatrixXd& u);

// Mean discounted defender utility over seeded episodes, both agents greedy.
// Each agent gets a fresh cache when `cache` is given.
CellEstimate estimate_payoff(const br::Agent& defender, const br::Agent& attacker,
                             const env::EnvConfig& env_config, int episodes, std::uint64_t seed,
                             const std::optional<qcache::CacheConfig>& cache = std::nullopt);

struct IterationLog {
  int iteration = 0;
  double value = 0.0;
  double value_per_device = 0.0;
  int defender_policies = 0;
  int attacker_policies = 0;
  double wall_ms = 0.0;
  long long cache_hits = 0;
  long long cache_misses = 0;
  double defender_gain = 0.0;  // new row vs previous attacker mixture, minus previous value
  double attacker_gain = 0.0;
  double epsilon = 0.0;        // stopping threshold at the previous value
  double payoff_wall_ms = 0.0; // time spent filling the new row and column
};

// iteration,value,value_per_device,defender_policies,attacker_policies,wall_ms,cache_hits,cache_misses
void write_iteration_header(std::ostream& out);
void write_iteration_row(std::ostream& out, const IterationLog& row);

struct StopRule {
  int min_iterations = 10;
  int max_iterations = 15;
  double relative = 0.01;
  double absolute = 1e-3;
  double threshold(double value) const { return relative * std::abs(value) + absolute; }
  void validate() const;
};

struct BrReport {
  long long cache_hits = 0;
  long long cache_misses = 0;
};

// Strategy-agnostic oracle. Strategies are indices into the caller's lists.
struct Oracle {
  // Appends a best response for `role` to the opponent mixture (over the
  // opponent's current list).
  std::function<BrReport(Role role, const std::vector<double>& opponent_mixture, int iteration)>
      best_response;
  std::function<CellEstimate(int defender, int attacker)> payoff;
  // Optional batch form; defaults to calling payoff per cell.
  std::function<std::vector<CellEstimate>(const std::vector<std::pair<int, int>>&)> payoffs;
};

struct DoOutcome {
  PayoffMatrix payoff;
  Equilibrium equilibrium;
  std::vector<IterationLog> log;
  bool converged = false;
};

// Starts from a 1 x 1 game over strategy 0 of each side. `device_count`
// scales value_per_device. Throws Error if a solve is more than 1e-6
// exploitable.
DoOutcome double_oracle(const StopRule& rule, const Oracle& oracle, int device_count,
                        const std::function<void(const IterationLog&)>& on_iteration = {});

struct DoConfig {
  env::EnvConfig env;
  br::BrConfig br;
  meta::MetaConfig meta;
  qcache::CacheConfig cache;
  bool use_meta = true;
  bool use_cache = true;
  int episodes_per_cell = 8;
  StopRule stop;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct RestrictedGame {
  std::vector<br::Agent> defenders;
  std::vector<br::Agent> attackers;
  PayoffMatrix payoff;
  Equilibrium equilibrium;
  double game_value() const { return equilibrium.value; }
  br::Mixture defender_mixture() const;
  br::Mixture attacker_mixture() const;
};

struct DoResult {
  RestrictedGame game;
  std::vector<IterationLog> log;
  bool converged = false;
};

DoResult run_double_oracle(const DoConfig& config,
                           const std::function<void(const IterationLog&)>& on_iteration = {});

// Per-cell seed used by run_double_oracle.
std::uint64_t cell_seed(std::uint64_t run_seed, int defender, int attacker);

}  // namespace metadoar::game
