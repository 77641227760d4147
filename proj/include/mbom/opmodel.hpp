#pragma once

// Opponent-modeling core: the learned environment model, imagined
// opponent policies (IOPs) at increasing reasoning levels, rollout
// best-response search inside the model, and the Bayesian mixer that
// weights the levels by how well they explain observed opponent actions.

#include <atomic>
#include <deque>
#include <iostream>

#include "mbom/ppo.hpp"

namespace mbom::opmodel {

// Predicts (s', r, r_o) from (s, one-hot a, one-hot a_o); linear head of
// width state_dim + 2.
struct EnvModel {
  nn::Net net;
  int state_dim = 0;
  int agent_actions = 0;
  int opp_actions = 0;

  int input_dim() const { return state_dim + agent_actions + opp_actions; }

  void build_input(std::span<const double> s, int a, int a_o, Vec& input) const {
    input.assign(input_dim(), 0.0);
    std::copy(s.begin(), s.end(), input.begin());
    input[state_dim + a] = 1.0;
    input[state_dim + agent_actions + a_o] = 1.0;
  }

  void predict(std::span<const double> s, int a, int a_o, Vec& s_next, double& r,
               double& r_o) const {
    Vec input;
    build_input(s, a, a_o, input);
    Vec out;
    nn::forward_into(net.spec, net.params, input, out);
    s_next.assign(out.begin(), out.begin() + state_dim);
    r = out[state_dim];
    r_o = out[state_dim + 1];
  }
};

inline EnvModel make_env_model(int state_dim, int agent_actions, int opp_actions,
                               const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{state_dim + agent_actions + opp_actions};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(state_dim + 2);
  EnvModel m;
  m.net = nn::make_net(std::move(sizes), nn::Head::linear, rng);
  m.state_dim = state_dim;
  m.agent_actions = agent_actions;
  m.opp_actions = opp_actions;
  return m;
}

// Imagined opponent policy at one reasoning level; softmax over the
// opponent action set.
struct Iop {
  nn::Net net;
  int level = 0;

  Vec probs(std::span<const double> s) const { return nn::forward(net.spec, net.params, s); }
  int n_actions() const { return net.spec.output_size(); }
};

inline Iop make_iop(int obs_dim, int opp_actions, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(opp_actions);
  return Iop{nn::make_net(std::move(sizes), nn::Head::softmax, rng), 0};
}

struct IopStack {
  std::vector<Iop> levels;

  int size() const { return static_cast<int>(levels.size()); }
  int opp_actions() const { return levels.front().n_actions(); }
};

// Each level starts life as a copy of level 0; recursive imagination
// re-derives levels 1..M-1 every epoch.
inline IopStack make_stack(const Iop& level0, int m_levels) {
  IopStack stack;
  for (int m = 0; m < m_levels; ++m) {
    Iop iop = level0;
    iop.level = m;
    stack.levels.push_back(std::move(iop));
  }
  return stack;
}

// --- supervised training ------------------------------------------------------

// Mean-square fit of the transition model: 0.5*|s'-pred|^2 + 0.5*|r-pred|^2
// over minibatches. Returns the final epoch's mean loss.
inline double train_env_model(EnvModel& model, std::span<const envs::TransitionRecord> buffer,
                              int epochs, int batch_size, double learning_rate, Rng& rng) {
  if (buffer.empty()) throw UsageError("train_env_model: empty buffer");
  nn::OptState opt = nn::make_opt(model.net.spec, learning_rate);
  nn::ParamSet grads = nn::zero_params(model.net.spec);
  nn::Trace trace;
  Vec input;
  std::vector<int> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min<std::size_t>(batch_size, order.size() - start);
      std::fill(grads.flat.begin(), grads.flat.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < count; ++j) {
        const envs::TransitionRecord& tr = buffer[order[start + j]];
        model.build_input(tr.s, tr.a, tr.a_o, input);
        const Vec& out = nn::forward_traced(model.net.spec, model.net.params, input, trace);
        Vec out_grad(out.size());
        double loss = 0.0;
        for (int d = 0; d < model.state_dim; ++d) {
          const double diff = out[d] - tr.s_next[d];
          loss += 0.5 * diff * diff;
          out_grad[d] = diff;
        }
        const double dr = out[model.state_dim] - tr.r;
        const double dro = out[model.state_dim + 1] - tr.r_o;
        loss += 0.5 * (dr * dr + dro * dro);
        out_grad[model.state_dim] = dr;
        out_grad[model.state_dim + 1] = dro;
        batch_loss += loss;
        nn::backward_accumulate(model.net.spec, model.net.params, trace, out_grad, grads);
      }
      for (double& g : grads.flat) g /= count;
      nn::opt_step(model.net.params, grads, opt);
      epoch_loss += batch_loss;
    }
    epoch_loss /= buffer.size();
  }
  return epoch_loss;
}

// Mean model loss on a buffer without training; the held-out evaluation
// used by the pretraining diagnostics.
inline double env_model_error(const EnvModel& model,
                              std::span<const envs::TransitionRecord> buffer) {
  if (buffer.empty()) throw UsageError("env_model_error: empty buffer");
  Vec input, out;
  double total = 0.0;
  for (const envs::TransitionRecord& tr : buffer) {
    model.build_input(tr.s, tr.a, tr.a_o, input);
    nn::forward_into(model.net.spec, model.net.params, input, out);
    double loss = 0.0;
    for (int d = 0; d < model.state_dim; ++d) {
      const double diff = out[d] - tr.s_next[d];
      loss += 0.5 * diff * diff;
    }
    const double dr = out[model.state_dim] - tr.r;
    const double dro = out[model.state_dim + 1] - tr.r_o;
    loss += 0.5 * (dr * dr + dro * dro);
    total += loss;
  }
  return total / buffer.size();
}

namespace detail {
// Shared cross-entropy loop for IOP fitting; full passes in minibatches.
inline double cross_entropy_fit(nn::Net& net, std::span<const std::pair<Vec, int>> pairs,
                                int epochs, int batch_size, double learning_rate, Rng& rng) {
  nn::OptState opt = nn::make_opt(net.spec, learning_rate);
  nn::ParamSet grads = nn::zero_params(net.spec);
  nn::Trace trace;
  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min<std::size_t>(batch_size, order.size() - start);
      std::fill(grads.flat.begin(), grads.flat.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < count; ++j) {
        const auto& [s, target] = pairs[order[start + j]];
        const Vec& p = nn::forward_traced(net.spec, net.params, s, trace);
        batch_loss += -std::log(std::max(p[target], 1e-300));
        Vec out_grad(p.size(), 0.0);
        out_grad[target] = -1.0 / std::max(p[target], 1e-300);
        nn::backward_accumulate(net.spec, net.params, trace, out_grad, grads);
      }
      for (double& g : grads.flat) g /= count;
      nn::opt_step(net.params, grads, opt);
      epoch_loss += batch_loss;
    }
    epoch_loss /= pairs.size();
  }
  return epoch_loss;
}
}  // namespace detail

// Maximum-likelihood fit of the level-0 IOP to observed opponent actions.
inline double train_level0(Iop& iop, std::span<const std::pair<Vec, int>> pairs, int epochs,
                           int batch_size, double learning_rate, Rng& rng) {
  if (iop.level != 0) throw UsageError("train_level0: iop is not level 0");
  if (pairs.empty()) throw UsageError("train_level0: empty buffer");
  return detail::cross_entropy_fit(iop.net, pairs, epochs, batch_size, learning_rate, rng);
}

// --- rollout best response -----------------------------------------------------

enum class RolloutMode { plain, bootstrapped };

// The simulated world the rollout search runs in. Built from the learned
// model and nets in production; tests substitute exact tabular dynamics.
struct RolloutWorld {
  int opp_actions = 0;
  std::function<void(const Vec& s, int a, int a_o, Vec& s_next, double& r, double& r_o)>
      transition;
  std::function<int(const Vec& s, Rng& rng)> agent_action;
  std::function<double(const Vec& s)> opponent_value;  // V^o for the bootstrap term
};

inline RolloutWorld make_rollout_world(const EnvModel& model,
                                       const ppo::ConditionedPolicy& policy,
                                       const ppo::ValueNet& value, const Iop& iop_prev,
                                       double v_sign) {
  RolloutWorld world;
  world.opp_actions = model.opp_actions;
  world.transition = [&model](const Vec& s, int a, int a_o, Vec& s_next, double& r, double& r_o) {
    model.predict(s, a, a_o, s_next, r, r_o);
  };
  world.agent_action = [&policy, &iop_prev](const Vec& s, Rng& rng) {
    Vec pred = iop_prev.probs(s);
    const int a_o_pred = rng.categorical(pred);
    Vec cond = one_hot(a_o_pred, static_cast<int>(pred.size()));
    return ppo::conditioned_act(policy, s, cond, rng).action;
  };
  world.opponent_value = [&value, v_sign](const Vec& s) { return v_sign * value.value(s); };
  return world;
}

// Scores every candidate first opponent action by the best discounted
// opponent return over continuation sequences (exhaustive when
// opp_actions^k fits under exhaustive_limit, uniformly sampled
// otherwise), simulating agent actions and transitions in `world`.
// Bootstrapped mode adds gamma^{k+1} * V^o at the rollout tail. Ties
// break to the lowest action id.
inline int imagine_best_response(const RolloutWorld& world, const Vec& s, int k, int n_seq,
                                 RolloutMode mode, double gamma, Rng& rng,
                                 int exhaustive_limit = 256) {
  if (k < 0 || n_seq < 1) throw UsageError("imagine_best_response: bad horizon arguments");
  const int n_opp = world.opp_actions;
  double combos = 1.0;
  for (int j = 0; j < k; ++j) combos *= n_opp;
  const bool exhaustive = combos <= exhaustive_limit;
  const int sequences = exhaustive ? static_cast<int>(combos) : n_seq;

  std::vector<int> continuation(k, 0);
  Vec s_cur, s_next;
  int best_action = 0;
  double best_score = -std::numeric_limits<double>::infinity();

  for (int first = 0; first < n_opp; ++first) {
    double action_score = -std::numeric_limits<double>::infinity();
    std::fill(continuation.begin(), continuation.end(), 0);
    for (int seq = 0; seq < sequences; ++seq) {
      if (!exhaustive)
        for (int& a : continuation) a = rng.below(n_opp);
      s_cur = s;
      double total = 0.0, disc = 1.0, r = 0.0, r_o = 0.0;
      for (int j = 0; j <= k; ++j) {
        const int a = world.agent_action(s_cur, rng);
        const int a_o = j == 0 ? first : continuation[j - 1];
        world.transition(s_cur, a, a_o, s_next, r, r_o);
        total += disc * r_o;
        disc *= gamma;
        s_cur.swap(s_next);
      }
      if (mode == RolloutMode::bootstrapped) total += disc * world.opponent_value(s_cur);
      action_score = std::max(action_score, total);
      if (exhaustive) {
        int pos = k - 1;
        while (pos >= 0 && ++continuation[pos] == n_opp) continuation[pos--] = 0;
      }
    }
    if (action_score > best_score) {
      best_score = action_score;
      best_action = first;
    }
  }
  return best_action;
}

// --- finetuning -------------------------------------------------------------------

// Clones the source level and trains the clone on (state, best-response)
// pairs; the source is untouched and the clone carries level + 1.
inline Iop finetune_iop(const Iop& source, std::span<const std::pair<Vec, int>> pairs, int steps,
                        double learning_rate, Rng& rng) {
  Iop next;
  next.net.spec = source.net.spec;
  next.net.params = nn::clone_params(source.net.params);
  next.level = source.level + 1;
  if (pairs.empty()) {
    std::cerr << "[mbom] finetune_iop: no pairs, returning unmodified clone\n";
    return next;
  }
  if (steps > 0)
    detail::cross_entropy_fit(next.net, pairs, steps, static_cast<int>(pairs.size()),
                              learning_rate, rng);
  return next;
}

// In-place update of the level-0 IOP on the real opponent actions from
// the most recent interaction window. Returns the final mean loss.
inline double finetune_level0(Iop& iop0, std::span<const std::pair<Vec, int>> recent, int steps,
                              double learning_rate, Rng& rng) {
  if (recent.empty()) {
    std::cerr << "[mbom] finetune_level0: no recent actions, skipping\n";
    return 0.0;
  }
  if (steps <= 0) return 0.0;
  return detail::cross_entropy_fit(iop0.net, recent, steps, static_cast<int>(recent.size()),
                                   learning_rate, rng);
}

// --- Bayesian mixing ----------------------------------------------------------------

// Temperature-scaled softmax; high temperatures flatten the weights.
inline Vec softer_softmax(std::span<const double> values, double temperature) {
  if (temperature <= 0.0) throw UsageError("softer_softmax: temperature must be positive");
  Vec out(values.begin(), values.end());
  for (double& v : out) v /= temperature;
  nn::softmax_inplace(out.data(), static_cast<int>(out.size()));
  return out;
}

// Posterior over levels given one observed opponent action. Likelihoods
// are floored (default 1e-8) so a level that assigns zero mass to the
// observation cannot zero out the normalizer.
inline Vec bayes_posterior(const IopStack& stack, std::span<const double> s, int a_o,
                           std::span<const double> prior, double likelihood_floor = 1e-8) {
  const int M = stack.size();
  Vec post(M, 0.0);
  double total = 0.0;
  for (int m = 0; m < M; ++m) {
    const double lik = std::max(stack.levels[m].probs(s)[a_o], likelihood_floor);
    post[m] = lik * prior[m];
    total += post[m];
  }
  if (total <= 0.0) return Vec(prior.begin(), prior.end());
  for (double& p : post) p /= total;
  return post;
}

// Decayed evidence accumulators over a sliding window of posteriors.
struct MixerState {
  Vec psi;
  Vec prior;
  Vec alpha;
  double lambda = 0.9;
  int horizon = 10;
  double temperature = 1.0;
  std::deque<Vec> history;  // most recent posterior at the back
};

inline MixerState make_mixer(int m_levels, double lambda, int horizon, double temperature) {
  MixerState mx;
  mx.psi.assign(m_levels, 0.0);
  mx.prior.assign(m_levels, 1.0 / m_levels);
  mx.alpha.assign(m_levels, 1.0 / m_levels);
  mx.lambda = lambda;
  mx.horizon = horizon;
  mx.temperature = temperature;
  return mx;
}

// Pushes one posterior into the window, then recomputes
// psi_m = sum over stored posteriors of lambda^age * p(m | a_l) with the
// newest entry at age 1, the moving-average prior, and
// alpha = softer_softmax(psi / temperature).
inline void update_mixer(MixerState& mixer, const Vec& posterior) {
  if (!is_probability_vector(posterior, 1e-6))
    throw UsageError("update_mixer: posterior is not a distribution");
  mixer.history.push_back(posterior);
  while (static_cast<int>(mixer.history.size()) > mixer.horizon) mixer.history.pop_front();
  const int M = static_cast<int>(mixer.psi.size());
  std::fill(mixer.psi.begin(), mixer.psi.end(), 0.0);
  std::fill(mixer.prior.begin(), mixer.prior.end(), 0.0);
  const int n = static_cast<int>(mixer.history.size());
  for (int i = 0; i < n; ++i) {
    const double decay = std::pow(mixer.lambda, static_cast<double>(n - i));
    for (int m = 0; m < M; ++m) {
      mixer.psi[m] += decay * mixer.history[i][m];
      mixer.prior[m] += mixer.history[i][m] / n;
    }
  }
  mixer.alpha = softer_softmax(mixer.psi, mixer.temperature);
}

// Convex combination of the level policies under the mixture weights.
inline Vec mixed_iop(const IopStack& stack, std::span<const double> alpha,
                     std::span<const double> s) {
  Vec out(stack.opp_actions(), 0.0);
  for (int m = 0; m < stack.size(); ++m) {
    if (alpha[m] == 0.0) continue;
    Vec p = stack.levels[m].probs(s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha[m] * p[i];
  }
  return out;
}

// --- full epoch -----------------------------------------------------------------------

struct MbomOptions {
  int k = 2;
  int n_seq = 16;
  int exhaustive_limit = 256;
  RolloutMode mode = RolloutMode::bootstrapped;
  double gamma = 0.99;
  double v_sign = -1.0;  // -V for zero-sum games, +V for cooperative ones
  int finetune_steps = 3;
  double finetune_lr = 0.005;
  // ablation switches
  bool random_finetune_targets = false;  // imagined best responses -> random actions
  bool uniform_mixing = false;           // ignore the Bayesian weights
  int fixed_level = -1;                  // predict with one level only, when >= 0
};

struct MbomEpochResult {
  double level0_loss = 0.0;
  Vec alpha;  // weights used by the returned predictor
  ppo::OpponentPredictor predictor;
};

// Call counter for harness tests that assert a variant never touches the
// opponent-modeling path.
inline std::atomic<long>& epoch_counter() {
  static std::atomic<long> count{0};
  return count;
}

// One adaptation epoch: finetune level 0 on the real actions from the
// last window, re-derive levels 1..M-1 by rollout best responses against
// the policy conditioned on the previous level, fold the window's
// observations into the mixer, and hand back the mixed predictor.
inline MbomEpochResult mbom_epoch(IopStack& stack, MixerState& mixer, const EnvModel& model,
                                  const ppo::ConditionedPolicy& policy, const ppo::ValueNet& value,
                                  const std::vector<std::pair<Vec, int>>& recent_real,
                                  const std::vector<Vec>& sim_states, const MbomOptions& opt,
                                  Rng& rng) {
  epoch_counter().fetch_add(1, std::memory_order_relaxed);
  MbomEpochResult result;
  result.level0_loss =
      finetune_level0(stack.levels[0], recent_real, opt.finetune_steps, opt.finetune_lr, rng);

  const int M = stack.size();
  std::vector<std::pair<Vec, int>> pairs;
  for (int m = 1; m < M; ++m) {
    pairs.clear();
    if (opt.random_finetune_targets) {
      for (const Vec& s : sim_states) pairs.emplace_back(s, rng.below(stack.opp_actions()));
    } else {
      RolloutWorld world =
          make_rollout_world(model, policy, value, stack.levels[m - 1], opt.v_sign);
      for (const Vec& s : sim_states) {
        const int target = imagine_best_response(world, s, opt.k, opt.n_seq, opt.mode, opt.gamma,
                                                 rng, opt.exhaustive_limit);
        pairs.emplace_back(s, target);
      }
    }
    stack.levels[m] =
        finetune_iop(stack.levels[m - 1], pairs, opt.finetune_steps, opt.finetune_lr, rng);
  }

  for (const auto& [s, a_o] : recent_real)
    update_mixer(mixer, bayes_posterior(stack, s, a_o, mixer.prior));

  if (opt.uniform_mixing)
    result.alpha.assign(M, 1.0 / M);
  else if (opt.fixed_level >= 0)
    result.alpha = one_hot(std::min(opt.fixed_level, M - 1), M);
  else
    result.alpha = mixer.alpha;

  result.predictor = [levels = stack, alpha = result.alpha](const Vec& s) {
    return mixed_iop(levels, alpha, s);
  };
  return result;
}

}  // namespace mbom::opmodel
