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

// Tabular MDP tools for checking the pruning bounds:
//
//   Delta(s)   = max_{a in A(s)} Q*(s,a) - max_{a in S(s)} Q*(s,a)
//   ||V* - V^{pi_S}||_inf <= max_s Delta(s) / (1 - gamma)
//   ||V* - V^pi||_inf     <= eps_Q / (1 - gamma),
//   eps_Q = max_s (max_a Q*(s,a) - Q*(s, pi(s)))
//
// where pi_S picks the Q*-argmax inside S(s). Q entries of unavailable
// actions are -infinity throughout.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "metadoar/common.hpp"

namespace metadoar::theory {

struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.9;
  std::vector<Eigen::MatrixXd> transitions;  // per action, P(s, s')
  Eigen::MatrixXd rewards;                   // S x A
  std::vector<std::vector<bool>> available;  // S x A

  bool allowed(int s, int a) const { return available[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]; }
  // Throws Error naming the first broken invariant.
  void validate() const;
};

struct PruneRule {
  std::vector<std::vector<bool>> keep;  // S x A, a subset of the available mask
  static PruneRule unpruned(const TabularMdp& mdp);
  void validate(const TabularMdp& mdp) const;
};

using TabularPolicy = std::vector<int>;

struct ValueIterationResult {
  Eigen::VectorXd v;
  Eigen::MatrixXd q;
  int iterations = 0;
  std::vector<double> residuals;  // ||T V_k - V_k||_inf per sweep
};

// Iterates V <- T V from zero until ||T V - V||_inf <= tol; returns that V.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol,
                                     int max_iterations = 10'000'000);

// Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) V(s'); -inf where unavailable.
Eigen::MatrixXd q_from_v(const TabularMdp& mdp, const Eigen::VectorXd& v);

// Argmax of q over each row's kept actions, ties to the lower index.
TabularPolicy pruned_greedy(const Eigen::MatrixXd& q, const PruneRule& rule);
TabularPolicy greedy(const TabularMdp& mdp, const Eigen::MatrixXd& q);

// Solves (I - gamma P^pi) V = r^pi with a partial-pivot LU.
Eigen::VectorXd policy_eval(const TabularMdp& mdp, const TabularPolicy& pi);

struct OptimalSolution {
  Eigen::VectorXd v;
  Eigen::MatrixXd q;
  TabularPolicy policy;
  int iterations = 0;
};

// Howard policy iteration with exact evaluation; V* to solver precision.
OptimalSolution policy_iteration(const TabularMdp& mdp);

double delta_max(const Eigen::MatrixXd& q, const PruneRule& rule);
// Largest one-step optimal-Q gap of a policy.
double q_gap(const Eigen::MatrixXd& q, const TabularPolicy& pi);

struct BoundCheck {
  double gap = 0.0;    // Delta_max or eps_Q
  double lhs = 0.0;    // ||V* - V^pi||_inf
  double rhs = 0.0;    // gap / (1 - gamma)
  double slack = 0.0;  // rhs + tol - lhs
  bool holds = true;
  int witness_state = -1;  // argmax of |V* - V^pi|
};

struct TheoremReport {
  BoundCheck theorem;  // pruned-greedy policy against Delta_max
  BoundCheck lemma;    // the supplied policy (or pi_S) against its eps_Q
  TabularPolicy pruned_policy;
};

BoundCheck check_lemma(const TabularMdp& mdp, const OptimalSolution& optimal,
                       const TabularPolicy& pi, double tol);
// Uses exact V* from policy iteration. `lemma_policy` defaults to pi_S.
TheoremReport check_theorem(const TabularMdp& mdp, const PruneRule& rule, double tol,
                            const TabularPolicy* lemma_policy = nullptr);

// Dirichlet(1) rows, rewards uniform in [-1, 1], each state keeps a random
// nonempty action subset.
TabularMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng);
// Random nonempty subset of each A(s).
PruneRule random_rule(const TabularMdp& mdp, Rng& rng);
TabularPolicy random_policy(const TabularMdp& mdp, Rng& rng);

struct CampaignRow {
  int instance = 0;
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  BoundCheck theorem;
  BoundCheck lemma;  // a uniformly random policy
};

// `instances` random (MDP, rule, policy) triples with up to max_states
// states and max_actions actions; gamma alternates over `gammas`.
// `unpruned` keeps every available action, so every gap is zero.
std::vector<CampaignRow> run_campaign(int instances, std::uint64_t seed, double tol,
                                      int max_states = 20, int max_actions = 6,
                                      std::vector<double> gammas = {0.9, 0.99},
                                      bool unpruned = false,
                                      const std::function<void(const CampaignRow&)>& on_row = {});

// instance,states,actions,gamma,delta_max,lhs,rhs,slack,holds,lemma_eps,lemma_lhs,lemma_rhs,lemma_slack,lemma_holds
void write_campaign_header(std::ostream& out);
void write_campaign_row(std::ostream& out, const CampaignRow& row);
void write_campaign_csv(std::ostream& out, const std::vector<CampaignRow>& rows);

}  // namespace metadoar::theory
