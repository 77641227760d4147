#pragma once

// Independent brute-force and dynamic-programming oracles over small
// explicit games: exhaustive best response, exact policy evaluation,
// exact Bayesian posteriors and the mixing-error inequality check. These
// ground the property tests for the learned components and stay
// independent of the network code paths they validate.

#include <algorithm>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "mbom/common.hpp"

namespace mbom::oracle {

// Explicit transition and reward tables over small finite spaces.
// Flat index: (s * n_agent + a) * n_opp + a_o.
struct TabularModel {
  int n_states = 0;
  int n_agent = 0;
  int n_opp = 0;
  std::vector<Vec> transition;  // per flat index, distribution over next states
  Vec reward;                   // agent reward per flat index
  Vec reward_opp;               // opponent reward per flat index

  int idx(int s, int a, int a_o) const { return (s * n_agent + a) * n_opp + a_o; }

  void validate() const {
    const int n = n_states * n_agent * n_opp;
    if (n_states < 1 || n_agent < 1 || n_opp < 1) throw ConfigError("tabular model: empty spaces");
    if (static_cast<int>(transition.size()) != n || static_cast<int>(reward.size()) != n ||
        static_cast<int>(reward_opp.size()) != n)
      throw ConfigError("tabular model: table size mismatch");
    for (const Vec& row : transition) {
      if (static_cast<int>(row.size()) != n_states || !is_probability_vector(row, 1e-9))
        throw ConfigError("tabular model: transition row is not a distribution");
    }
  }
};

struct TabularPolicy {
  std::vector<Vec> rows;  // per state, distribution over actions

  int n_actions() const { return rows.empty() ? 0 : static_cast<int>(rows[0].size()); }

  void validate() const {
    for (const Vec& row : rows)
      if (!is_probability_vector(row, 1e-9)) throw ConfigError("tabular policy: bad row");
  }

  int sample(int s, Rng& rng) const { return rng.categorical(rows[s]); }
};

struct BestResponse {
  int action = 0;
  double value = 0.0;
};

// Exhaustive evaluation of the opponent's open-loop rollout objective:
// enumerates every opponent action sequence of length k+1, scores each by
// the exact expected discounted opponent return under the agent policy,
// and returns the argmax first action (lowest id on ties). The search
// shares prefixes, propagating the state distribution down a DFS tree.
inline BestResponse brute_force_best_response(const TabularModel& model,
                                              const TabularPolicy& agent_policy, int start_state,
                                              int k, double gamma) {
  double total = 1.0;
  for (int j = 0; j <= k; ++j) {
    total *= model.n_opp;
    if (total > 4.2e6) throw UsageError("brute force best response: enumeration too large");
  }

  Vec best_per_first(model.n_opp, -std::numeric_limits<double>::infinity());
  // one distribution buffer per depth; prefixes are shared down the tree
  std::vector<Vec> dist(k + 2, Vec(model.n_states, 0.0));
  dist[0][start_state] = 1.0;

  std::function<void(int, double, double, int)> dfs = [&](int j, double disc, double acc,
                                                          int first) {
    if (j > k) {
      if (acc > best_per_first[first]) best_per_first[first] = acc;
      return;
    }
    for (int ao = 0; ao < model.n_opp; ++ao) {
      double immediate = 0.0;
      Vec& next = dist[j + 1];
      std::fill(next.begin(), next.end(), 0.0);
      for (int s = 0; s < model.n_states; ++s) {
        if (dist[j][s] == 0.0) continue;
        for (int a = 0; a < model.n_agent; ++a) {
          const double w = dist[j][s] * agent_policy.rows[s][a];
          if (w == 0.0) continue;
          const int id = model.idx(s, a, ao);
          immediate += w * model.reward_opp[id];
          const Vec& p = model.transition[id];
          for (int s2 = 0; s2 < model.n_states; ++s2) next[s2] += w * p[s2];
        }
      }
      dfs(j + 1, disc * gamma, acc + disc * immediate, j == 0 ? ao : first);
    }
  };
  dfs(0, 1.0, 0.0, 0);

  BestResponse br;
  br.action = 0;
  br.value = best_per_first[0];
  for (int ao = 1; ao < model.n_opp; ++ao) {
    if (best_per_first[ao] > br.value) {
      br.value = best_per_first[ao];
      br.action = ao;
    }
  }
  return br;
}

// Exact agent state values under fixed agent and opponent policies,
// iterated to a fixed point within tol. Set opponent_reward to evaluate
// the opponent's return instead.
inline Vec exact_value(const TabularModel& model, const TabularPolicy& agent_policy,
                       const TabularPolicy& opponent_policy, double gamma, double tol = 1e-10,
                       bool opponent_reward = false) {
  if (gamma >= 1.0) throw UsageError("exact_value: gamma must be < 1");
  const Vec& rew = opponent_reward ? model.reward_opp : model.reward;
  Vec v(model.n_states, 0.0), v_next(model.n_states, 0.0);
  for (long iter = 0; iter < 1000000; ++iter) {
    double change = 0.0;
    for (int s = 0; s < model.n_states; ++s) {
      double acc = 0.0;
      for (int a = 0; a < model.n_agent; ++a) {
        const double pa = agent_policy.rows[s][a];
        if (pa == 0.0) continue;
        for (int ao = 0; ao < model.n_opp; ++ao) {
          const double w = pa * opponent_policy.rows[s][ao];
          if (w == 0.0) continue;
          const int id = model.idx(s, a, ao);
          double future = 0.0;
          const Vec& p = model.transition[id];
          for (int s2 = 0; s2 < model.n_states; ++s2) future += p[s2] * v[s2];
          acc += w * (rew[id] + gamma * future);
        }
      }
      v_next[s] = acc;
      change = std::max(change, std::abs(v_next[s] - v[s]));
    }
    v.swap(v_next);
    if (change < tol) break;
  }
  return v;
}

// Opponent's optimal (closed-loop greedy) value against a fixed agent
// policy, by value iteration over the opponent reward.
inline Vec opponent_greedy_value(const TabularModel& model, const TabularPolicy& agent_policy,
                                 double gamma, double tol = 1e-10) {
  if (gamma >= 1.0) throw UsageError("opponent_greedy_value: gamma must be < 1");
  Vec v(model.n_states, 0.0), v_next(model.n_states, 0.0);
  for (long iter = 0; iter < 1000000; ++iter) {
    double change = 0.0;
    for (int s = 0; s < model.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int ao = 0; ao < model.n_opp; ++ao) {
        double acc = 0.0;
        for (int a = 0; a < model.n_agent; ++a) {
          const double pa = agent_policy.rows[s][a];
          if (pa == 0.0) continue;
          const int id = model.idx(s, a, ao);
          double future = 0.0;
          const Vec& p = model.transition[id];
          for (int s2 = 0; s2 < model.n_states; ++s2) future += p[s2] * v[s2];
          acc += pa * (model.reward_opp[id] + gamma * future);
        }
        best = std::max(best, acc);
      }
      v_next[s] = best;
      change = std::max(change, std::abs(v_next[s] - v[s]));
    }
    v.swap(v_next);
    if (change < tol) break;
  }
  return v;
}

// --- exact Bayesian posteriors ---------------------------------------------

struct PosteriorSequence {
  std::vector<Vec> posteriors;
  bool degenerate = false;  // a zero total likelihood was hit
};

// Sequential exact Bayes updates over (state, opponent action)
// observations, with no likelihood floor; each update's prior is the
// previous posterior.
inline PosteriorSequence exact_posterior(const std::vector<TabularPolicy>& iop_tables,
                                         const std::vector<std::pair<int, int>>& observations,
                                         Vec prior) {
  if (!is_probability_vector(prior, 1e-9)) throw UsageError("exact_posterior: prior not a distribution");
  PosteriorSequence seq;
  const int m_count = static_cast<int>(iop_tables.size());
  for (const auto& [s, ao] : observations) {
    Vec post(m_count, 0.0);
    double total = 0.0;
    for (int m = 0; m < m_count; ++m) {
      post[m] = iop_tables[m].rows[s][ao] * prior[m];
      total += post[m];
    }
    if (total <= 0.0) {
      seq.degenerate = true;
      seq.posteriors.push_back(prior);  // no information; carry the prior
      continue;
    }
    for (double& p : post) p /= total;
    seq.posteriors.push_back(post);
    prior = seq.posteriors.back();
  }
  return seq;
}

// --- mixing-error inequality ------------------------------------------------

struct Lemma1Instance {
  TabularModel model;
  TabularPolicy agent;
  std::vector<TabularPolicy> iops;
  TabularPolicy true_opponent;
  Vec alpha;
  double gamma = 0.9;
};

struct Lemma1Report {
  Vec lhs_per_state;   // sum_m alpha_m * eps_m(s)
  Vec rhs_per_state;   // sum_m delta_m(s) * sum_{i>=m} alpha_i
  double max_violation = 0.0;
  bool ok = false;
};

// Checks, for every state, that the mixed-model error sum_m alpha_m*eps_m
// is bounded by sum_m delta_m * sum_{i>=m} alpha_i, where eps_m is the
// value error of level m against the true opponent and delta_m the value
// gap between consecutive levels (delta_0 = eps_0).
inline Lemma1Report check_lemma1(const Lemma1Instance& inst, double tol = 1e-9) {
  const int M = static_cast<int>(inst.iops.size());
  if (M < 2) throw UsageError("check_lemma1: needs at least 2 levels");
  const Vec v_true = exact_value(inst.model, inst.agent, inst.true_opponent, inst.gamma);
  std::vector<Vec> v_hat(M);
  for (int m = 0; m < M; ++m)
    v_hat[m] = exact_value(inst.model, inst.agent, inst.iops[m], inst.gamma);

  Vec alpha_tail(M, 0.0);
  double tail = 0.0;
  for (int m = M - 1; m >= 0; --m) {
    tail += inst.alpha[m];
    alpha_tail[m] = tail;
  }

  Lemma1Report rep;
  rep.lhs_per_state.resize(inst.model.n_states);
  rep.rhs_per_state.resize(inst.model.n_states);
  for (int s = 0; s < inst.model.n_states; ++s) {
    double lhs = 0.0, rhs = 0.0;
    for (int m = 0; m < M; ++m) {
      const double eps = std::abs(v_hat[m][s] - v_true[s]);
      const double delta = m == 0 ? eps : std::abs(v_hat[m][s] - v_hat[m - 1][s]);
      lhs += inst.alpha[m] * eps;
      rhs += delta * alpha_tail[m];
    }
    rep.lhs_per_state[s] = lhs;
    rep.rhs_per_state[s] = rhs;
    rep.max_violation = std::max(rep.max_violation, lhs - rhs);
  }
  rep.ok = rep.max_violation <= tol;
  return rep;
}

// --- random instances --------------------------------------------------------

struct InstanceOptions {
  int min_states = 2;
  int max_states = 5;
  int min_actions = 2;
  int max_actions = 4;
  bool deterministic_transitions = false;
};

inline TabularPolicy random_policy(Rng& rng, int n_states, int n_actions,
                                   bool deterministic = false) {
  TabularPolicy pol;
  pol.rows.assign(n_states, Vec(n_actions, 0.0));
  for (Vec& row : pol.rows) {
    if (deterministic) {
      row[rng.below(n_actions)] = 1.0;
    } else {
      double total = 0.0;
      for (double& p : row) {
        p = rng.uniform() + 1e-3;
        total += p;
      }
      for (double& p : row) p /= total;
    }
  }
  return pol;
}

// Uniform rewards in [-1, 1]; transitions are normalized uniform rows or
// random deterministic ones.
inline TabularModel random_model(Rng& rng, const InstanceOptions& opt = {}) {
  TabularModel m;
  m.n_states = opt.min_states + rng.below(opt.max_states - opt.min_states + 1);
  m.n_agent = opt.min_actions + rng.below(opt.max_actions - opt.min_actions + 1);
  m.n_opp = opt.min_actions + rng.below(opt.max_actions - opt.min_actions + 1);
  const int n = m.n_states * m.n_agent * m.n_opp;
  m.transition.assign(n, Vec(m.n_states, 0.0));
  m.reward.resize(n);
  m.reward_opp.resize(n);
  for (int i = 0; i < n; ++i) {
    m.reward[i] = rng.uniform(-1.0, 1.0);
    m.reward_opp[i] = rng.uniform(-1.0, 1.0);
    Vec& row = m.transition[i];
    if (opt.deterministic_transitions) {
      row[rng.below(m.n_states)] = 1.0;
    } else {
      double total = 0.0;
      for (double& p : row) {
        p = rng.uniform() + 1e-3;
        total += p;
      }
      for (double& p : row) p /= total;
    }
  }
  return m;
}

// L1 distance between two policies, maximized over states; used to keep
// generated IOP sets distinguishable.
inline double policy_l1_distance(const TabularPolicy& a, const TabularPolicy& b) {
  double best = 0.0;
  for (std::size_t s = 0; s < a.rows.size(); ++s) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.rows[s].size(); ++i) d += std::abs(a.rows[s][i] - b.rows[s][i]);
    best = std::max(best, d);
  }
  return best;
}

inline std::vector<TabularPolicy> distinguishable_policies(Rng& rng, int count, int n_states,
                                                           int n_actions, double min_l1 = 0.4) {
  std::vector<TabularPolicy> out;
  while (static_cast<int>(out.size()) < count) {
    TabularPolicy cand = random_policy(rng, n_states, n_actions);
    bool distinct = true;
    for (const TabularPolicy& prev : out)
      if (policy_l1_distance(prev, cand) < min_l1) distinct = false;
    if (distinct) out.push_back(std::move(cand));
  }
  return out;
}

// --- verification suite -------------------------------------------------------

struct VerificationRow {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The standalone oracle checks behind the `verify` CLI subcommand.
inline std::vector<VerificationRow> run_verification(std::uint64_t seed) {
  std::vector<VerificationRow> rows;
  char buf[128];

  {  // mixing-error inequality on random instances, every state
    Rng rng(derive_seed(seed, 1));
    int violations = 0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      Lemma1Instance inst;
      inst.model = random_model(rng);
      inst.agent = random_policy(rng, inst.model.n_states, inst.model.n_agent);
      const int M = 2 + rng.below(3);
      for (int m = 0; m < M; ++m)
        inst.iops.push_back(random_policy(rng, inst.model.n_states, inst.model.n_opp));
      inst.true_opponent = random_policy(rng, inst.model.n_states, inst.model.n_opp);
      // alpha from exact posteriors of observations drawn from the true opponent
      std::vector<std::pair<int, int>> obs;
      for (int t = 0; t < 30; ++t) {
        const int s = rng.below(inst.model.n_states);
        obs.emplace_back(s, inst.true_opponent.sample(s, rng));
      }
      PosteriorSequence seq = exact_posterior(inst.iops, obs, Vec(M, 1.0 / M));
      inst.alpha = seq.posteriors.back();
      Lemma1Report rep = check_lemma1(inst);
      worst = std::max(worst, rep.max_violation);
      if (!rep.ok) ++violations;
    }
    std::snprintf(buf, sizeof(buf), "%d violations, worst margin %.3e", violations, worst);
    rows.push_back({"mixing_error_inequality_100", violations == 0, buf});
  }

  {  // posterior concentration on the generating policy
    Rng rng(derive_seed(seed, 2));
    int converged = 0;
    for (int inst = 0; inst < 20; ++inst) {
      const int n_states = 3, n_actions = 4, M = 3;
      auto iops = distinguishable_policies(rng, M, n_states, n_actions);
      const int truth = rng.below(M);
      std::vector<std::pair<int, int>> obs;
      for (int t = 0; t < 200; ++t) {
        const int s = rng.below(n_states);
        obs.emplace_back(s, iops[truth].sample(s, rng));
      }
      PosteriorSequence seq = exact_posterior(iops, obs, Vec(M, 1.0 / M));
      bool hit = false;
      for (const Vec& p : seq.posteriors)
        if (p[truth] > 0.99) hit = true;
      if (hit) ++converged;
    }
    std::snprintf(buf, sizeof(buf), "%d/20 concentrated above 0.99", converged);
    rows.push_back({"posterior_concentration_20", converged >= 19, buf});
  }

  {  // truncated open-loop best response approaches the greedy fixed point
    Rng rng(derive_seed(seed, 3));
    const double gamma = 0.9;
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      InstanceOptions opt;
      opt.max_states = 3;
      opt.min_actions = 2;
      opt.max_actions = 2;
      opt.deterministic_transitions = true;
      TabularModel model = random_model(rng, opt);
      TabularPolicy agent = random_policy(rng, model.n_states, model.n_agent, true);
      Vec greedy = opponent_greedy_value(model, agent, gamma);
      BestResponse br = brute_force_best_response(model, agent, 0, 20, gamma);
      const double bound = std::pow(gamma, 21.0) / (1.0 - gamma);
      const double diff = std::abs(br.value - greedy[0]);
      worst = std::max(worst, diff - bound);
      if (diff > bound) ok = false;
    }
    std::snprintf(buf, sizeof(buf), "worst excess over bound %.3e", worst);
    rows.push_back({"rollout_truncation_consistency_5", ok, buf});
  }

  {  // policy evaluation reaches a tight fixed point
    Rng rng(derive_seed(seed, 4));
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      TabularModel model = random_model(rng);
      TabularPolicy agent = random_policy(rng, model.n_states, model.n_agent);
      TabularPolicy opp = random_policy(rng, model.n_states, model.n_opp);
      Vec v = exact_value(model, agent, opp, 0.9);
      // Bellman residual of the returned table
      for (int s = 0; s < model.n_states; ++s) {
        double acc = 0.0;
        for (int a = 0; a < model.n_agent; ++a)
          for (int ao = 0; ao < model.n_opp; ++ao) {
            const int id = model.idx(s, a, ao);
            double future = 0.0;
            for (int s2 = 0; s2 < model.n_states; ++s2)
              future += model.transition[id][s2] * v[s2];
            acc += agent.rows[s][a] * opp.rows[s][ao] * (model.reward[id] + 0.9 * future);
          }
        worst = std::max(worst, std::abs(acc - v[s]));
      }
    }
    std::snprintf(buf, sizeof(buf), "worst Bellman residual %.3e", worst);
    rows.push_back({"value_iteration_residual_20", worst < 1e-9, buf});
  }

  return rows;
}

}  // namespace mbom::oracle
