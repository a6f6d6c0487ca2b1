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

#include "metadoar/theory.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <Eigen/LU>

namespace metadoar::theory {
namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Returns the witness state alongside the sup-norm.
std::pair<double, int> sup_norm(const Eigen::VectorXd& d) {
  Eigen::Index at = 0;
  const double n = d.cwiseAbs().maxCoeff(&at);
  return {n, static_cast<int>(at)};
}

BoundCheck bound(const Eigen::VectorXd& v_star, const Eigen::VectorXd& v_pi, double gap,
                 double gamma, double tol) {
  BoundCheck b;
  b.gap = gap;
  const auto [lhs, at] = sup_norm(v_star - v_pi);
  b.lhs = lhs;
  b.witness_state = at;
  b.rhs = gap / (1.0 - gamma);
  b.slack = b.rhs + tol - b.lhs;
  b.holds = b.slack >= 0.0;
  return b;
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states < 1 || n_actions < 1) throw Error("TabularMdp: empty state or action set");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("TabularMdp: gamma must lie in [0, 1)");
  if (static_cast<int>(transitions.size()) != n_actions) throw Error("TabularMdp: transition count mismatch");
  if (rewards.rows() != n_states || rewards.cols() != n_actions) throw Error("TabularMdp: reward shape mismatch");
  if (!rewards.allFinite()) throw Error("TabularMdp: non-finite reward");
  if (static_cast<int>(available.size()) != n_states) throw Error("TabularMdp: mask shape mismatch");
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(available[idx(s)].size()) != n_actions) throw Error("TabularMdp: mask shape mismatch");
    bool any = false;
    for (int a = 0; a < n_actions; ++a) any = any || allowed(s, a);
    if (!any) throw Error("TabularMdp: state " + std::to_string(s) + " has no available action");
  }
  for (int a = 0; a < n_actions; ++a) {
    const auto& p = transitions[idx(a)];
    if (p.rows() != n_states || p.cols() != n_states) throw Error("TabularMdp: transition shape mismatch");
    if ((p.array() < 0.0).any() || !p.allFinite()) throw Error("TabularMdp: invalid transition probability");
    for (int s = 0; s < n_states; ++s)
      if (std::abs(p.row(s).sum() - 1.0) > 1e-12)
        throw Error("TabularMdp: transition row (" + std::to_string(s) + ", " + std::to_string(a) +
                    ") does not sum to 1");
  }
}

PruneRule PruneRule::unpruned(const TabularMdp& mdp) { return PruneRule{mdp.available}; }

void PruneRule::validate(const TabularMdp& mdp) const {
  if (static_cast<int>(keep.size()) != mdp.n_states) throw Error("PruneRule: shape mismatch");
  for (int s = 0; s < mdp.n_states; ++s) {
    if (static_cast<int>(keep[idx(s)].size()) != mdp.n_actions) throw Error("PruneRule: shape mismatch");
    bool any = false;
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (keep[idx(s)][idx(a)] && !mdp.allowed(s, a))
        throw Error("PruneRule: keeps an unavailable action in state " + std::to_string(s));
      any = any || keep[idx(s)][idx(a)];
    }
    if (!any) throw Error("PruneRule: empty subset in state " + std::to_string(s));
  }
}

Eigen::MatrixXd q_from_v(const TabularMdp& mdp, const Eigen::VectorXd& v) {
  Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a)
    q.col(a) = mdp.rewards.col(a) + mdp.gamma * (mdp.transitions[idx(a)] * v);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      if (!mdp.allowed(s, a)) q(s, a) = kNegInf;
  return q;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, int max_iterations) {
  mdp.validate();
  if (!(tol > 0.0)) throw Error("value_iteration: tol must be > 0");
  ValueIterationResult out;
  out.v = Eigen::VectorXd::Zero(mdp.n_states);
  for (;;) {
    out.q = q_from_v(mdp, out.v);
    const Eigen::VectorXd next = out.q.rowwise().maxCoeff();
    const double residual = (next - out.v).cwiseAbs().maxCoeff();
    out.residuals.push_back(residual);
    if (residual <= tol) break;
    if (out.iterations >= max_iterations) throw Error("value_iteration: iteration cap reached");
    out.v = next;
    ++out.iterations;
  }
  return out;
}

TabularPolicy pruned_greedy(const Eigen::MatrixXd& q, const PruneRule& rule) {
  if (static_cast<Eigen::Index>(rule.keep.size()) != q.rows()) throw Error("pruned_greedy: shape mismatch");
  TabularPolicy pi(static_cast<std::size_t>(q.rows()), -1);
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const auto& keep = rule.keep[static_cast<std::size_t>(s)];
    if (static_cast<Eigen::Index>(keep.size()) != q.cols()) throw Error("pruned_greedy: shape mismatch");
    int best = -1;
    for (Eigen::Index a = 0; a < q.cols(); ++a) {
      if (!keep[static_cast<std::size_t>(a)]) continue;
      if (best < 0 || q(s, a) > q(s, best)) best = static_cast<int>(a);
    }
    if (best < 0) throw Error("pruned_greedy: empty subset in state " + std::to_string(s));
    pi[static_cast<std::size_t>(s)] = best;
  }
  return pi;
}

TabularPolicy greedy(const TabularMdp& mdp, const Eigen::MatrixXd& q) {
  return pruned_greedy(q, PruneRule::unpruned(mdp));
}

Eigen::VectorXd policy_eval(const TabularMdp& mdp, const TabularPolicy& pi) {
  if (static_cast<int>(pi.size()) != mdp.n_states) throw Error("policy_eval: policy size mismatch");
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states);
  Eigen::VectorXd r(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    const int act = pi[idx(s)];
    if (act < 0 || act >= mdp.n_actions || !mdp.allowed(s, act))
      throw Error("policy_eval: unavailable action in state " + std::to_string(s));
    a.row(s) -= mdp.gamma * mdp.transitions[idx(act)].row(s);
    r[s] = mdp.rewards(s, act);
  }
  return a.partialPivLu().solve(r);
}

OptimalSolution policy_iteration(const TabularMdp& mdp) {
  mdp.validate();
  OptimalSolution out;
  out.policy = greedy(mdp, q_from_v(mdp, Eigen::VectorXd::Zero(mdp.n_states)));
  for (;;) {
    out.v = policy_eval(mdp, out.policy);
    out.q = q_from_v(mdp, out.v);
    ++out.iterations;
    bool stable = true;
    for (int s = 0; s < mdp.n_states; ++s) {
      const int cur = out.policy[idx(s)];
      Eigen::Index best = 0;
      const double top = out.q.row(s).maxCoeff(&best);
      // Switch only on a strict improvement beyond round-off.
      if (top > out.q(s, cur) + 1e-12 * (1.0 + std::abs(top))) {
        out.policy[idx(s)] = static_cast<int>(best);
        stable = false;
      }
    }
    if (stable) break;
    if (out.iterations > 10'000) throw Error("policy_iteration: no convergence");
  }
  return out;
}

double delta_max(const Eigen::MatrixXd& q, const PruneRule& rule) {
  const TabularPolicy pi = pruned_greedy(q, rule);
  return q_gap(q, pi);
}

double q_gap(const Eigen::MatrixXd& q, const TabularPolicy& pi) {
  if (static_cast<Eigen::Index>(pi.size()) != q.rows()) throw Error("q_gap: policy size mismatch");
  double gap = 0.0;
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double chosen = q(s, pi[static_cast<std::size_t>(s)]);
    if (!std::isfinite(chosen)) throw Error("q_gap: policy picks an unavailable action");
    gap = std::max(gap, q.row(s).maxCoeff() - chosen);
  }
  return gap;
}

BoundCheck check_lemma(const TabularMdp& mdp, const OptimalSolution& optimal,
                       const TabularPolicy& pi, double tol) {
  return bound(optimal.v, policy_eval(mdp, pi), q_gap(optimal.q, pi), mdp.gamma, tol);
}

TheoremReport check_theorem(const TabularMdp& mdp, const PruneRule& rule, double tol,
                            const TabularPolicy* lemma_policy) {
  if (!(tol > 0.0)) throw Error("check_theorem: tol must be > 0");
  rule.validate(mdp);
  const OptimalSolution opt = policy_iteration(mdp);
  TheoremReport report;
  report.pruned_policy = pruned_greedy(opt.q, rule);
  report.theorem = bound(opt.v, policy_eval(mdp, report.pruned_policy), delta_max(opt.q, rule),
                         mdp.gamma, tol);
  report.lemma = check_lemma(mdp, opt, lemma_policy ? *lemma_policy : report.pruned_policy, tol);
  return report;
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  if (n_states < 1 || n_actions < 1) throw Error("random_mdp: sizes must be positive");
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.rewards.resize(n_states, n_actions);
  mdp.available.assign(idx(n_states), std::vector<bool>(idx(n_actions), false));
  for (int a = 0; a < n_actions; ++a) {
    Eigen::MatrixXd p(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      // Dirichlet(1, ..., 1) as normalized Exp(1) draws.
      for (int t = 0; t < n_states; ++t) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        p(s, t) = -std::log(u);
      }
      p.row(s) /= p.row(s).sum();
    }
    mdp.transitions.push_back(std::move(p));
  }
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.rewards(s, a) = 2.0 * uniform01(rng) - 1.0;
  for (int s = 0; s < n_states; ++s) {
    const int count = 1 + static_cast<int>(uniform_index(rng, idx(n_actions)));
    // First `count` entries of a random permutation.
    std::vector<int> perm(idx(n_actions));
    for (int a = 0; a < n_actions; ++a) perm[idx(a)] = a;
    for (int i = n_actions - 1; i > 0; --i)
      std::swap(perm[idx(i)], perm[uniform_index(rng, idx(i + 1))]);
    for (int i = 0; i < count; ++i) mdp.available[idx(s)][idx(perm[idx(i)])] = true;
  }
  return mdp;
}

PruneRule random_rule(const TabularMdp& mdp, Rng& rng) {
  PruneRule rule{std::vector<std::vector<bool>>(idx(mdp.n_states), std::vector<bool>(idx(mdp.n_actions), false))};
  for (int s = 0; s < mdp.n_states; ++s) {
    std::vector<int> avail;
    for (int a = 0; a < mdp.n_actions; ++a)
      if (mdp.allowed(s, a)) avail.push_back(a);
    bool any = false;
    for (int a : avail) {
      if (uniform01(rng) < 0.5) {
        rule.keep[idx(s)][idx(a)] = true;
        any = true;
      }
    }
    if (!any) rule.keep[idx(s)][idx(avail[uniform_index(rng, avail.size())])] = true;
  }
  return rule;
}

TabularPolicy random_policy(const TabularMdp& mdp, Rng& rng) {
  TabularPolicy pi(idx(mdp.n_states));
  for (int s = 0; s < mdp.n_states; ++s) {
    std::vector<int> avail;
    for (int a = 0; a < mdp.n_actions; ++a)
      if (mdp.allowed(s, a)) avail.push_back(a);
    pi[idx(s)] = avail[uniform_index(rng, avail.size())];
  }
  return pi;
}

std::vector<CampaignRow> run_campaign(int instances, std::uint64_t seed, double tol,
                                      int max_states, int max_actions, std::vector<double> gammas,
                                      bool unpruned,
                                      const std::function<void(const CampaignRow&)>& on_row) {
  if (instances < 0) throw Error("run_campaign: negative instance count");
  if (max_states < 1 || max_actions < 1 || gammas.empty()) throw Error("run_campaign: bad limits");
  std::vector<CampaignRow> rows;
  for (int i = 0; i < instances; ++i) {
    Rng rng(mix_seed(seed, idx(i)));
    CampaignRow row;
    row.instance = i;
    row.n_states = 1 + static_cast<int>(uniform_index(rng, idx(max_states)));
    row.n_actions = 1 + static_cast<int>(uniform_index(rng, idx(max_actions)));
    row.gamma = gammas[idx(i) % gammas.size()];
    const TabularMdp mdp = random_mdp(row.n_states, row.n_actions, row.gamma, rng);
    PruneRule rule = random_rule(mdp, rng);
    if (unpruned) rule = PruneRule::unpruned(mdp);
    const TabularPolicy pi = random_policy(mdp, rng);
    const TheoremReport report = check_theorem(mdp, rule, tol, &pi);
    row.theorem = report.theorem;
    row.lemma = report.lemma;
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

void write_campaign_header(std::ostream& out) {
  out << "instance,states,actions,gamma,delta_max,lhs,rhs,slack,holds,lemma_eps,lemma_lhs,"
         "lemma_rhs,lemma_slack,lemma_holds\n";
}

void write_campaign_row(std::ostream& out, const CampaignRow& r) {
  const auto old_precision = out.precision(17);
  out << r.instance << ',' << r.n_states << ',' << r.n_actions << ',' << r.gamma << ','
      << r.theorem.gap << ',' << r.theorem.lhs << ',' << r.theorem.rhs << ',' << r.theorem.slack
      << ',' << (r.theorem.holds ? 1 : 0) << ',' << r.lemma.gap << ',' << r.lemma.lhs << ','
      << r.lemma.rhs << ',' << r.lemma.slack << ',' << (r.lemma.holds ? 1 : 0) << '\n';
  out.precision(old_precision);
}

void write_campaign_csv(std::ostream& out, const std::vector<CampaignRow>& rows) {
  write_campaign_header(out);
  for (const auto& r : rows) write_campaign_row(out, r);
}

}  // namespace metadoar::theory
