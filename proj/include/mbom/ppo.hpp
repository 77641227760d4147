#pragma once

// Proximal-policy training over the minimal network engine: trajectory
// collection with an opponent-conditioned policy head, generalized
// advantage estimation, and clipped-surrogate updates. The same update
// path trains the agent, zoo opponents and learner opponents.

#include <functional>
#include <numeric>

#include "mbom/envs.hpp"
#include "mbom/nn.hpp"

namespace mbom::ppo {

// Softmax policy over agent actions whose input is the observation
// concatenated with a one-hot predicted opponent action.
struct ConditionedPolicy {
  nn::Net net;
  int obs_dim = 0;
  int opp_actions = 0;

  int input_dim() const { return obs_dim + opp_actions; }
  int n_actions() const { return net.spec.output_size(); }

  void build_input(std::span<const double> obs, std::span<const double> cond, Vec& input) const {
    input.resize(input_dim());
    std::copy(obs.begin(), obs.end(), input.begin());
    std::copy(cond.begin(), cond.end(), input.begin() + obs_dim);
  }

  Vec probs(std::span<const double> obs, std::span<const double> cond) const {
    Vec input;
    build_input(obs, cond, input);
    return nn::forward(net.spec, net.params, input);
  }
};

inline ConditionedPolicy make_conditioned_policy(int obs_dim, int opp_actions, int agent_actions,
                                                 const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{obs_dim + opp_actions};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(agent_actions);
  ConditionedPolicy p;
  p.net = nn::make_net(std::move(sizes), nn::Head::softmax, rng);
  p.obs_dim = obs_dim;
  p.opp_actions = opp_actions;
  return p;
}

struct ValueNet {
  nn::Net net;

  double value(std::span<const double> obs) const {
    return nn::forward(net.spec, net.params, obs)[0];
  }
};

inline ValueNet make_value_net(int obs_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return ValueNet{nn::make_net(std::move(sizes), nn::Head::linear, rng)};
}

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
};

inline ActResult conditioned_act(const ConditionedPolicy& policy, std::span<const double> obs,
                                 std::span<const double> a_o_pred_onehot, Rng& rng) {
  Vec p = policy.probs(obs, a_o_pred_onehot);
  const int a = rng.categorical(p);
  return ActResult{a, std::log(p[a])};
}

// --- generalized advantage estimation ---------------------------------------

// Recursive GAE over one episode segment (no terminations inside);
// bootstrap is the value of the state following the last step.
inline std::pair<Vec, Vec> compute_gae(std::span<const double> rewards,
                                       std::span<const double> values, double bootstrap,
                                       double gamma, double lam) {
  if (rewards.size() != values.size()) throw UsageError("compute_gae: length mismatch");
  const int n = static_cast<int>(rewards.size());
  Vec adv(n, 0.0), ret(n, 0.0);
  double gae = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double v_next = t + 1 < n ? values[t + 1] : bootstrap;
    const double delta = rewards[t] + gamma * v_next - values[t];
    gae = delta + gamma * lam * gae;
    adv[t] = gae;
    ret[t] = adv[t] + values[t];
  }
  return {std::move(adv), std::move(ret)};
}

// --- rollout storage ---------------------------------------------------------

struct StepRecord {
  Vec obs;
  Vec cond;  // conditioning one-hot fed to the agent policy
  int a = 0;
  int a_o = 0;
  double r = 0.0;
  double r_o = 0.0;
  Vec obs_next;
  bool done = false;
  double logp = 0.0;    // agent action log-probability at collection
  double logp_o = 0.0;  // opponent action log-probability at collection
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct RolloutBuffer {
  std::vector<StepRecord> steps;
  bool finalized = false;

  std::vector<envs::TransitionRecord> transitions() const {
    std::vector<envs::TransitionRecord> out;
    out.reserve(steps.size());
    for (const StepRecord& st : steps)
      out.push_back({st.obs, st.a, st.a_o, st.obs_next, st.r, st.r_o});
    return out;
  }

  double mean_episode_return() const {
    double total = 0.0, acc = 0.0;
    int episodes = 0;
    for (const StepRecord& st : steps) {
      acc += st.r;
      if (st.done) {
        total += acc;
        acc = 0.0;
        ++episodes;
      }
    }
    if (episodes == 0) return acc;
    return total / episodes;
  }
};

// Computes advantages/returns segment by segment; terminated segments
// bootstrap with zero, a trailing unterminated segment with
// tail_bootstrap (typically V of the next observation).
inline void finalize_rollout(RolloutBuffer& buf, double gamma, double lam, double tail_bootstrap) {
  std::size_t begin = 0;
  while (begin < buf.steps.size()) {
    std::size_t end = begin;
    while (end < buf.steps.size() && !buf.steps[end].done) ++end;
    const bool terminated = end < buf.steps.size();
    if (terminated) ++end;
    Vec rewards, values;
    for (std::size_t i = begin; i < end; ++i) {
      rewards.push_back(buf.steps[i].r);
      values.push_back(buf.steps[i].value);
    }
    auto [adv, ret] = compute_gae(rewards, values, terminated ? 0.0 : tail_bootstrap, gamma, lam);
    for (std::size_t i = begin; i < end; ++i) {
      buf.steps[i].advantage = adv[i - begin];
      buf.steps[i].ret = ret[i - begin];
    }
    begin = end;
  }
  buf.finalized = true;
}

// --- clipped-surrogate update -------------------------------------------------

struct PpoConfig {
  double lr = 1e-3;
  int epochs = 10;
  double clip = 0.115;
  double entropy_coef = 0.01;
  int minibatch = 64;
  double gamma = 0.99;
  double lam = 0.99;
  bool normalize_advantages = true;
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

inline double clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

// Generic clipped PPO pass over an explicit batch; the policy input may
// be any vector (conditioned or plain), the value net always reads the
// observation.
inline PpoStats ppo_update_batch(nn::Net& policy, nn::OptState& popt, nn::Net& value,
                                 nn::OptState& vopt, const std::vector<Vec>& policy_in,
                                 const std::vector<Vec>& value_in, const std::vector<int>& actions,
                                 const Vec& old_logp, Vec adv, const Vec& ret,
                                 const PpoConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(policy_in.size());
  if (n == 0) throw UsageError("ppo_update: empty batch");

  if (cfg.normalize_advantages) {
    double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  nn::Trace trace;
  nn::ParamSet pgrad = nn::zero_params(policy.spec);
  nn::ParamSet vgrad = nn::zero_params(value.spec);
  PpoStats stats;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    stats = PpoStats{};
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int count = std::min(cfg.minibatch, n - start);
      std::fill(pgrad.flat.begin(), pgrad.flat.end(), 0.0);
      std::fill(vgrad.flat.begin(), vgrad.flat.end(), 0.0);
      double ploss = 0.0, vloss = 0.0, ent = 0.0;
      for (int j = 0; j < count; ++j) {
        const int i = order[start + j];
        const double a_i = adv[i];

        const Vec& p = nn::forward_traced(policy.spec, policy.params, policy_in[i], trace);
        const int act = actions[i];
        const double new_logp = std::log(std::max(p[act], 1e-300));
        const double ratio = std::exp(new_logp - old_logp[i]);
        const double surr1 = ratio * a_i;
        const double surr2 = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a_i;
        ploss += -std::min(surr1, surr2);

        double entropy = 0.0;
        for (double q : p) entropy -= q * std::log(std::max(q, 1e-12));
        ent += entropy;

        Vec out_grad(p.size(), 0.0);
        if (surr1 <= surr2) out_grad[act] += -a_i * ratio / std::max(p[act], 1e-300);
        if (cfg.entropy_coef != 0.0) {
          for (std::size_t q = 0; q < p.size(); ++q)
            out_grad[q] += cfg.entropy_coef * (std::log(std::max(p[q], 1e-12)) + 1.0);
        }
        nn::backward_accumulate(policy.spec, policy.params, trace, out_grad, pgrad);

        const Vec& v = nn::forward_traced(value.spec, value.params, value_in[i], trace);
        const double diff = v[0] - ret[i];
        vloss += 0.5 * diff * diff;
        nn::backward_accumulate(value.spec, value.params, trace, Vec{diff}, vgrad);
      }
      if (!std::isfinite(ploss) || !std::isfinite(vloss))
        throw TrainingError("ppo_update: non-finite loss");
      const double inv = 1.0 / count;
      for (double& g : pgrad.flat) g *= inv;
      for (double& g : vgrad.flat) g *= inv;
      nn::opt_step(policy.params, pgrad, popt);
      nn::opt_step(value.params, vgrad, vopt);
      stats.policy_loss += ploss * inv * count / n;
      stats.value_loss += vloss * inv * count / n;
      stats.entropy += ent * inv * count / n;
    }
  }
  return stats;
}

// Agent-facing update over a finalized rollout buffer.
inline PpoStats ppo_update(ConditionedPolicy& policy, nn::OptState& popt, ValueNet& value,
                           nn::OptState& vopt, const RolloutBuffer& buffer, const PpoConfig& cfg,
                           Rng& rng) {
  if (!buffer.finalized) throw UsageError("ppo_update: buffer not finalized");
  const int n = static_cast<int>(buffer.steps.size());
  std::vector<Vec> policy_in(n), value_in(n);
  std::vector<int> actions(n);
  Vec old_logp(n), adv(n), ret(n);
  for (int i = 0; i < n; ++i) {
    const StepRecord& st = buffer.steps[i];
    policy.build_input(st.obs, st.cond, policy_in[i]);
    value_in[i] = st.obs;
    actions[i] = st.a;
    old_logp[i] = st.logp;
    adv[i] = st.advantage;
    ret[i] = st.ret;
  }
  return ppo_update_batch(policy.net, popt, value.net, vopt, policy_in, value_in, actions,
                          old_logp, adv, ret, cfg, rng);
}

// --- collection ----------------------------------------------------------------

// Opponent behavior: action and its log-probability at the given state.
using OpponentActor = std::function<std::pair<int, double>(const Vec& obs, Rng& rng)>;

// Distribution over opponent actions used to condition the agent policy.
using OpponentPredictor = std::function<Vec(const Vec& obs)>;

inline OpponentPredictor uniform_predictor(int n_actions) {
  return [n_actions](const Vec&) { return Vec(n_actions, 1.0 / n_actions); };
}

// Collects n_steps transitions, conditioning each agent action on a
// sampled prediction from `predictor`; resets the environment whenever an
// episode ends. The buffer comes back finalized.
inline RolloutBuffer collect_rollout(const ConditionedPolicy& policy, const ValueNet& value,
                                     envs::Env& env, const OpponentActor& opponent, int n_steps,
                                     const OpponentPredictor& predictor, Rng& rng,
                                     const PpoConfig& cfg = {}) {
  RolloutBuffer buf;
  buf.steps.reserve(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    if (env.state().done) env.reset(rng.next_u64());
    StepRecord st;
    st.obs = env.state().observation;
    Vec pred = predictor(st.obs);
    const int a_o_pred = rng.categorical(pred);
    st.cond = one_hot(a_o_pred, static_cast<int>(pred.size()));
    ActResult act = conditioned_act(policy, st.obs, st.cond, rng);
    st.a = act.action;
    st.logp = act.log_prob;
    auto [a_o, logp_o] = opponent(st.obs, rng);
    st.a_o = a_o;
    st.logp_o = logp_o;
    st.value = value.value(st.obs);
    envs::StepResult res = env.step(st.a, st.a_o);
    st.obs_next = res.next_state.observation;
    st.r = res.r;
    st.r_o = res.r_o;
    st.done = res.done;
    buf.steps.push_back(std::move(st));
  }
  double tail = 0.0;
  if (!buf.steps.empty() && !buf.steps.back().done)
    tail = value.value(buf.steps.back().obs_next);
  finalize_rollout(buf, cfg.gamma, cfg.lam, tail);
  return buf;
}

}  // namespace mbom::ppo
