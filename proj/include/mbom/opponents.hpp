#pragma once

// Opponent zoo construction and the three test-time opponent behaviors:
// frozen snapshots, naive learners that keep running policy-gradient
// updates, and reasoning learners that model the agent and condition
// their policy on its predicted action.

#include <filesystem>
#include <memory>

#include "mbom/opmodel.hpp"
#include "mbom/ppo.hpp"

namespace mbom::opponents {

enum class Role { train, validation, test };

inline std::string role_name(Role r) {
  switch (r) {
    case Role::train: return "train";
    case Role::validation: return "validation";
    default: return "test";
  }
}

inline Role role_from_name(const std::string& s) {
  if (s == "train") return Role::train;
  if (s == "validation") return Role::validation;
  if (s == "test") return Role::test;
  throw ConfigError("unknown zoo role: " + s);
}

struct Provenance {
  int run_id = 0;
  int iteration = 0;
  std::string variant_tag = "plain";
};

struct OpponentSnapshot {
  std::string id;
  Role role = Role::train;
  bool reasoning = false;
  Provenance provenance;
  nn::Net policy;       // plain: obs -> actions; reasoning: obs + agent one-hot -> actions
  nn::Net value;        // obs -> scalar, lets learner types resume training
  nn::Net agent_model;  // reasoning only: obs -> agent action distribution
};

struct Zoo {
  std::vector<OpponentSnapshot> snapshots;

  std::vector<const OpponentSnapshot*> with_role(Role role, bool reasoning) const {
    std::vector<const OpponentSnapshot*> out;
    for (const OpponentSnapshot& s : snapshots)
      if (s.role == role && s.reasoning == reasoning) out.push_back(&s);
    return out;
  }
};

// --- behaviors ---------------------------------------------------------------

struct EpisodeStep {
  Vec obs;
  int a = 0;
  int a_o = 0;
  double r = 0.0;
  double r_o = 0.0;
  Vec obs_next;
  bool done = false;
};

using EpisodeTrace = std::vector<EpisodeStep>;

inline int fixed_act(const OpponentSnapshot& snap, std::span<const double> obs, Rng& rng) {
  Vec p = nn::forward(snap.policy.spec, snap.policy.params, obs);
  return rng.categorical(p);
}

class OpponentAgent {
 public:
  virtual ~OpponentAgent() = default;
  virtual int act(const Vec& obs, Rng& rng) = 0;
  virtual void episode_update(const EpisodeTrace& trace, Rng& rng) {}
};

class FixedOpponent final : public OpponentAgent {
 public:
  explicit FixedOpponent(const OpponentSnapshot& snap) : snap_(snap) {}

  int act(const Vec& obs, Rng& rng) override { return fixed_act(snap_, obs, rng); }

  std::uint64_t policy_version() const { return snap_.policy.params.version; }

 private:
  OpponentSnapshot snap_;
};

namespace detail {
// Builds the generic PPO batch for the opponent's side of a trace: plain
// policies read the observation, conditioned ones get an explicit input.
inline ppo::PpoStats opponent_ppo_pass(nn::Net& policy, nn::OptState& popt, nn::Net& value,
                                       nn::OptState& vopt, const EpisodeTrace& trace,
                                       const std::vector<Vec>* policy_inputs,
                                       const ppo::PpoConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(trace.size());
  std::vector<Vec> pin(n), vin(n);
  std::vector<int> actions(n);
  Vec old_logp(n), rewards(n), values(n);
  for (int i = 0; i < n; ++i) {
    pin[i] = policy_inputs ? (*policy_inputs)[i] : trace[i].obs;
    vin[i] = trace[i].obs;
    actions[i] = trace[i].a_o;
    Vec p = nn::forward(policy.spec, policy.params, pin[i]);
    old_logp[i] = std::log(std::max(p[actions[i]], 1e-300));
    rewards[i] = trace[i].r_o;
    values[i] = nn::forward(value.spec, value.params, trace[i].obs)[0];
  }
  // advantages segment by segment over episode boundaries
  Vec adv(n), ret(n);
  int begin = 0;
  while (begin < n) {
    int end = begin;
    while (end < n && !trace[end].done) ++end;
    const bool terminated = end < n;
    if (terminated) ++end;
    Vec seg_r(rewards.begin() + begin, rewards.begin() + end);
    Vec seg_v(values.begin() + begin, values.begin() + end);
    const double tail = terminated
                            ? 0.0
                            : nn::forward(value.spec, value.params, trace[end - 1].obs_next)[0];
    auto [a, r2] = ppo::compute_gae(seg_r, seg_v, tail, cfg.gamma, cfg.lam);
    for (int i = begin; i < end; ++i) {
      adv[i] = a[i - begin];
      ret[i] = r2[i - begin];
    }
    begin = end;
  }
  return ppo::ppo_update_batch(policy, popt, value, vopt, pin, vin, actions, old_logp, adv, ret,
                               cfg, rng);
}
}  // namespace detail

// Pre-trained opponent that keeps improving its policy with
// policy-gradient updates on its own reward during the interaction.
class NaiveLearner final : public OpponentAgent {
 public:
  NaiveLearner(const OpponentSnapshot& snap, const ppo::PpoConfig& cfg)
      : policy_(snap.policy),
        value_(snap.value),
        popt_(nn::make_opt(snap.policy.spec, cfg.lr)),
        vopt_(nn::make_opt(snap.value.spec, cfg.lr)),
        cfg_(cfg) {}

  int act(const Vec& obs, Rng& rng) override {
    Vec p = nn::forward(policy_.spec, policy_.params, obs);
    return rng.categorical(p);
  }

  void episode_update(const EpisodeTrace& trace, Rng& rng) override { step(trace, rng); }

  // One PPO update on the learner's own experience.
  ppo::PpoStats step(const EpisodeTrace& trace, Rng& rng) {
    ppo::PpoStats stats =
        detail::opponent_ppo_pass(policy_, popt_, value_, vopt_, trace, nullptr, cfg_, rng);
    update_count_ += 1;
    return stats;
  }

  long update_count() const { return update_count_; }
  const nn::Net& policy() const { return policy_; }

 private:
  nn::Net policy_;
  nn::Net value_;
  nn::OptState popt_, vopt_;
  ppo::PpoConfig cfg_;
  long update_count_ = 0;
};

// Opponent that predicts the agent's action with a learned model and
// conditions its policy on the prediction; both parts are finetuned
// during the interaction.
class ReasoningLearner final : public OpponentAgent {
 public:
  ReasoningLearner(const OpponentSnapshot& snap, const ppo::PpoConfig& cfg, int agent_actions,
                   int model_finetune_steps = 3, double model_finetune_lr = 0.005)
      : policy_(snap.policy),
        value_(snap.value),
        agent_model_(snap.agent_model),
        popt_(nn::make_opt(snap.policy.spec, cfg.lr)),
        vopt_(nn::make_opt(snap.value.spec, cfg.lr)),
        cfg_(cfg),
        agent_actions_(agent_actions),
        model_steps_(model_finetune_steps),
        model_lr_(model_finetune_lr) {}

  int act(const Vec& obs, Rng& rng) override {
    Vec pred = nn::forward(agent_model_.spec, agent_model_.params, obs);
    const int a_hat = rng.categorical(pred);
    sampled_preds_.push_back(a_hat);
    Vec input = conditioned_input(obs, a_hat);
    Vec p = nn::forward(policy_.spec, policy_.params, input);
    return rng.categorical(p);
  }

  void episode_update(const EpisodeTrace& trace, Rng& rng) override {
    std::vector<std::pair<Vec, int>> observed;
    for (const EpisodeStep& st : trace) observed.emplace_back(st.obs, st.a);
    update(observed, trace, model_steps_, model_lr_, rng);
  }

  // Cross-entropy finetune of the agent model on observed (state, agent
  // action) pairs, then one PPO pass on the learner's own reward. An
  // empty observation list leaves the model untouched.
  void update(std::span<const std::pair<Vec, int>> observed, const EpisodeTrace& trace, int steps,
              double lr, Rng& rng) {
    if (!observed.empty() && steps > 0)
      opmodel::detail::cross_entropy_fit(agent_model_, observed, steps,
                                         static_cast<int>(observed.size()), lr, rng);
    if (!trace.empty()) {
      std::vector<Vec> inputs(trace.size());
      for (std::size_t i = 0; i < trace.size(); ++i) {
        const int a_hat = i < sampled_preds_.size() ? sampled_preds_[i] : 0;
        inputs[i] = conditioned_input(trace[i].obs, a_hat);
      }
      detail::opponent_ppo_pass(policy_, popt_, value_, vopt_, trace, &inputs, cfg_, rng);
    }
    sampled_preds_.clear();
  }

  const nn::Net& agent_model() const { return agent_model_; }
  const nn::Net& policy() const { return policy_; }

  double agent_model_cross_entropy(std::span<const std::pair<Vec, int>> observed) const {
    double total = 0.0;
    for (const auto& [s, a] : observed) {
      Vec p = nn::forward(agent_model_.spec, agent_model_.params, s);
      total += -std::log(std::max(p[a], 1e-300));
    }
    return observed.empty() ? 0.0 : total / observed.size();
  }

 private:
  Vec conditioned_input(std::span<const double> obs, int a_hat) const {
    Vec input(obs.size() + agent_actions_, 0.0);
    std::copy(obs.begin(), obs.end(), input.begin());
    input[obs.size() + a_hat] = 1.0;
    return input;
  }

  nn::Net policy_;
  nn::Net value_;
  nn::Net agent_model_;
  nn::OptState popt_, vopt_;
  ppo::PpoConfig cfg_;
  int agent_actions_;
  int model_steps_;
  double model_lr_;
  std::vector<int> sampled_preds_;  // conditioning draws for the pending episode
};

inline std::unique_ptr<OpponentAgent> make_opponent(const OpponentSnapshot& snap,
                                                    const std::string& type,
                                                    const ppo::PpoConfig& cfg, int agent_actions) {
  if (type == "fixed") return std::make_unique<FixedOpponent>(snap);
  if (type == "naive") return std::make_unique<NaiveLearner>(snap, cfg);
  if (type == "reasoning") {
    if (!snap.reasoning) throw UsageError("snapshot " + snap.id + " has no agent model");
    return std::make_unique<ReasoningLearner>(snap, cfg, agent_actions);
  }
  throw ConfigError("unknown opponent type: " + type);
}

// --- zoo construction -----------------------------------------------------------

struct ZooConfig {
  int runs = 10;
  int train_per_run = 20;
  int val_per_run = 3;
  int test_per_run = 3;
  int reasoners_per_run = 3;  // extra reasoning learners appended to the test set
  int iterations = 40;        // PPO iterations per run
  int rollout_steps = 512;
  std::vector<int> hidden = {64, 32};
  ppo::PpoConfig ppo;
  double opponent_entropy = 0.0;    // lower than the agent's: sharper habits
  std::vector<std::string> variants;  // reward-shaping tags cycled over runs
  std::uint64_t seed = 9000;
};

namespace detail {

// Reward shaping applied to the opponent during zoo training to spread
// the pool over qualitatively different habits (hover at one landmark,
// commute between two, rotate over all three). Reads the opponent touch
// one-hot from the triangle observation; other games train plain.
class VariantShaper {
 public:
  VariantShaper(const std::string& game, const std::string& tag) {
    if (game != "triangle" || tag == "plain") return;
    if (tag.rfind("favor-T", 0) == 0) {
      mode_ = Mode::favor;
      a_ = tag[7] - '0';
    } else if (tag.rfind("commute-T", 0) == 0 && tag.size() == 11) {
      mode_ = Mode::commute;
      a_ = tag[9] - '0';
      b_ = tag[10] - '0';
    } else if (tag == "rotate") {
      mode_ = Mode::rotate;
    } else {
      throw ConfigError("unknown zoo variant tag: " + tag);
    }
  }

  double bonus(const Vec& obs_next, bool done) {
    int touch = 0;  // 0 = none, 1..3 = landmark
    for (int i = 1; i < 4; ++i)
      if (obs_next.size() >= 12 && obs_next[8 + i] == 1.0) touch = i;
    double shaped = 0.0;
    switch (mode_) {
      case Mode::none:
        break;
      case Mode::favor:
        if (touch == a_) shaped = 2.0;
        break;
      case Mode::commute:
        if (touch == a_ || touch == b_) {
          shaped = 2.0;
          if (last_touch_ != 0 && touch != last_touch_) shaped += 2.0;
        }
        break;
      case Mode::rotate:
        if (touch != 0 && last_touch_ != 0 && touch == last_touch_ % 3 + 1) shaped = 2.0;
        break;
    }
    if (touch != 0) last_touch_ = touch;
    if (done) last_touch_ = 0;
    return shaped;
  }

 private:
  enum class Mode { none, favor, commute, rotate } mode_ = Mode::none;
  int a_ = 0, b_ = 0;
  int last_touch_ = 0;
};

struct PlainLearner {
  nn::Net policy;
  nn::Net value;
  nn::OptState popt;
  nn::OptState vopt;

  static PlainLearner make(int policy_in_dim, int value_in_dim, int actions,
                           const std::vector<int>& hidden, double lr, Rng& rng) {
    std::vector<int> psizes{policy_in_dim};
    psizes.insert(psizes.end(), hidden.begin(), hidden.end());
    psizes.push_back(actions);
    std::vector<int> vsizes{value_in_dim};
    vsizes.insert(vsizes.end(), hidden.begin(), hidden.end());
    vsizes.push_back(1);
    PlainLearner pl;
    pl.policy = nn::make_net(psizes, nn::Head::softmax, rng);
    pl.value = nn::make_net(vsizes, nn::Head::linear, rng);
    pl.popt = nn::make_opt(pl.policy.spec, lr);
    pl.vopt = nn::make_opt(pl.value.spec, lr);
    return pl;
  }

  int act(const Vec& input, Rng& rng) const {
    return rng.categorical(nn::forward(policy.spec, policy.params, input));
  }
};

}  // namespace detail

// Trains one opponent by independent self-contained PPO against a
// throwaway agent-side learner, snapshotting the opponent at evenly
// spaced iterations. `reasoning` switches the opponent side to the
// agent-modeling architecture.
inline std::vector<OpponentSnapshot> run_opponent_training(const std::string& game_name,
                                                           int episode_len, const ZooConfig& cfg,
                                                           int run_id, const std::string& variant,
                                                           bool reasoning,
                                                           const std::vector<int>& snapshot_iters,
                                                           std::uint64_t seed) {
  auto env = envs::make_env(game_name, episode_len);
  const int obs_dim = env->spec().state_dim;
  const int n_a = env->spec().agent_actions;
  const int n_o = env->spec().opponent_actions;
  Rng rng(seed);

  detail::PlainLearner agent_side =
      detail::PlainLearner::make(obs_dim, obs_dim, n_a, cfg.hidden, cfg.ppo.lr, rng);
  detail::PlainLearner opp = detail::PlainLearner::make(obs_dim + (reasoning ? n_a : 0), obs_dim,
                                                        n_o, cfg.hidden, cfg.ppo.lr, rng);
  nn::Net agent_model;
  if (reasoning) {
    std::vector<int> sizes{obs_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(n_a);
    agent_model = nn::make_net(sizes, nn::Head::softmax, rng);
  }

  detail::VariantShaper shaper(game_name, variant);
  std::vector<OpponentSnapshot> snaps;
  std::size_t next_snap = 0;

  env->reset(rng.next_u64());
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    EpisodeTrace trace;
    std::vector<Vec> opp_inputs;
    std::vector<Vec> agent_in(cfg.rollout_steps);
    std::vector<int> agent_actions(cfg.rollout_steps);
    Vec agent_logp(cfg.rollout_steps);
    std::vector<std::pair<Vec, int>> observed_agent;

    for (int t = 0; t < cfg.rollout_steps; ++t) {
      if (env->state().done) env->reset(rng.next_u64());
      EpisodeStep st;
      st.obs = env->state().observation;
      Vec pa = nn::forward(agent_side.policy.spec, agent_side.policy.params, st.obs);
      st.a = rng.categorical(pa);
      agent_in[t] = st.obs;
      agent_actions[t] = st.a;
      agent_logp[t] = std::log(std::max(pa[st.a], 1e-300));

      Vec opp_input = st.obs;
      if (reasoning) {
        Vec pred = nn::forward(agent_model.spec, agent_model.params, st.obs);
        const int a_hat = rng.categorical(pred);
        opp_input.resize(obs_dim + n_a, 0.0);
        opp_input[obs_dim + a_hat] = 1.0;
      }
      st.a_o = opp.act(opp_input, rng);
      opp_inputs.push_back(opp_input);

      envs::StepResult res = env->step(st.a, st.a_o);
      st.obs_next = res.next_state.observation;
      st.r = res.r;
      st.r_o = res.r_o + shaper.bonus(res.next_state.observation, res.done);
      st.done = res.done;
      observed_agent.emplace_back(st.obs, st.a);
      trace.push_back(std::move(st));
    }

    // opponent update on its shaped reward
    ppo::PpoConfig opp_cfg = cfg.ppo;
    opp_cfg.entropy_coef = cfg.opponent_entropy;
    detail::opponent_ppo_pass(opp.policy, opp.popt, opp.value, opp.vopt, trace,
                              reasoning ? &opp_inputs : nullptr, opp_cfg, rng);
    if (reasoning)
      opmodel::detail::cross_entropy_fit(agent_model, observed_agent, 3,
                                         static_cast<int>(observed_agent.size()), 0.005, rng);

    // agent-side update on its own reward
    {
      Vec rewards(trace.size()), values(trace.size());
      for (std::size_t i = 0; i < trace.size(); ++i) {
        rewards[i] = trace[i].r;
        values[i] = nn::forward(agent_side.value.spec, agent_side.value.params, trace[i].obs)[0];
      }
      Vec adv(trace.size()), ret(trace.size());
      std::size_t begin = 0;
      while (begin < trace.size()) {
        std::size_t end = begin;
        while (end < trace.size() && !trace[end].done) ++end;
        const bool terminated = end < trace.size();
        if (terminated) ++end;
        Vec seg_r(rewards.begin() + begin, rewards.begin() + end);
        Vec seg_v(values.begin() + begin, values.begin() + end);
        const double tail =
            terminated ? 0.0
                       : nn::forward(agent_side.value.spec, agent_side.value.params,
                                     trace[end - 1].obs_next)[0];
        auto [a, r2] = ppo::compute_gae(seg_r, seg_v, tail, cfg.ppo.gamma, cfg.ppo.lam);
        for (std::size_t i = begin; i < end; ++i) {
          adv[i] = a[i - begin];
          ret[i] = r2[i - begin];
        }
        begin = end;
      }
      ppo::ppo_update_batch(agent_side.policy, agent_side.popt, agent_side.value, agent_side.vopt,
                            agent_in, agent_in, agent_actions, agent_logp, adv, ret, cfg.ppo, rng);
    }

    while (next_snap < snapshot_iters.size() && snapshot_iters[next_snap] == iter) {
      OpponentSnapshot snap;
      snap.provenance = {run_id, iter, variant};
      snap.reasoning = reasoning;
      snap.policy = opp.policy;
      snap.value = opp.value;
      if (reasoning) snap.agent_model = agent_model;
      snaps.push_back(std::move(snap));
      ++next_snap;
    }
  }
  return snaps;
}

// Evenly spaced snapshot iterations, later snapshots first stay later.
inline std::vector<int> snapshot_schedule(int iterations, int count) {
  std::vector<int> iters;
  for (int i = 1; i <= count; ++i)
    iters.push_back(std::max(1, static_cast<int>(std::llround(
                                    static_cast<double>(i) * iterations / count))));
  for (std::size_t i = 1; i < iters.size(); ++i)
    if (iters[i] <= iters[i - 1]) iters[i] = std::min(iterations, iters[i - 1] + 1);
  return iters;
}

// Builds the full pool: per run, train_per_run + val_per_run +
// test_per_run plain snapshots at evenly spaced iterations (chronological
// order: train first, validation, then test), plus reasoners_per_run
// reasoning learners trained separately and added to the test set.
// Divergent runs are retried with a fresh seed up to 3 times.
inline Zoo build_zoo(const std::string& game_name, int episode_len, const ZooConfig& cfg) {
  if (cfg.runs < 1) throw UsageError("build_zoo: needs at least one run");
  Zoo zoo;
  const int per_run = cfg.train_per_run + cfg.val_per_run + cfg.test_per_run;
  if (per_run > cfg.iterations || cfg.reasoners_per_run > cfg.iterations)
    throw ConfigError("build_zoo: more snapshots per run than training iterations");
  const std::vector<int> plain_iters = snapshot_schedule(cfg.iterations, per_run);
  const std::vector<int> reason_iters = snapshot_schedule(cfg.iterations, cfg.reasoners_per_run);

  for (int run = 0; run < cfg.runs; ++run) {
    const std::string variant =
        cfg.variants.empty() ? "plain" : cfg.variants[run % cfg.variants.size()];
    for (int attempt = 0;; ++attempt) {
      try {
        auto snaps = run_opponent_training(game_name, episode_len, cfg, run, variant, false,
                                           plain_iters, derive_seed(cfg.seed, run, attempt));
        for (std::size_t i = 0; i < snaps.size(); ++i) {
          OpponentSnapshot& s = snaps[i];
          if (static_cast<int>(i) < cfg.train_per_run)
            s.role = Role::train;
          else if (static_cast<int>(i) < cfg.train_per_run + cfg.val_per_run)
            s.role = Role::validation;
          else
            s.role = Role::test;
          s.id = "r" + std::to_string(run) + "_i" + std::to_string(s.provenance.iteration);
          zoo.snapshots.push_back(std::move(s));
        }
        break;
      } catch (const TrainingError&) {
        if (attempt >= 3) throw;
      }
    }
    if (cfg.reasoners_per_run > 0) {
      for (int attempt = 0;; ++attempt) {
        try {
          auto snaps =
              run_opponent_training(game_name, episode_len, cfg, run, variant, true, reason_iters,
                                    derive_seed(cfg.seed, 1000 + run, attempt));
          for (OpponentSnapshot& s : snaps) {
            s.role = Role::test;
            s.id = "rl" + std::to_string(run) + "_i" + std::to_string(s.provenance.iteration);
            zoo.snapshots.push_back(std::move(s));
          }
          break;
        } catch (const TrainingError&) {
          if (attempt >= 3) throw;
        }
      }
    }
  }
  return zoo;
}

// --- persistence ------------------------------------------------------------------

inline void save_zoo(const std::string& dir, const Zoo& zoo) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (const OpponentSnapshot& s : zoo.snapshots) {
    nlohmann::json entry;
    entry["id"] = s.id;
    entry["role"] = role_name(s.role);
    entry["reasoning"] = s.reasoning;
    entry["run"] = s.provenance.run_id;
    entry["iteration"] = s.provenance.iteration;
    entry["variant"] = s.provenance.variant_tag;
    entry["policy"] = s.id + "_policy.ckpt";
    entry["value"] = s.id + "_value.ckpt";
    nn::save_checkpoint(dir + "/" + s.id + "_policy.ckpt", s.policy.spec, s.policy.params);
    nn::save_checkpoint(dir + "/" + s.id + "_value.ckpt", s.value.spec, s.value.params);
    if (s.reasoning) {
      entry["agent_model"] = s.id + "_agent_model.ckpt";
      nn::save_checkpoint(dir + "/" + s.id + "_agent_model.ckpt", s.agent_model.spec,
                          s.agent_model.params);
    }
    manifest.push_back(entry);
  }
  std::ofstream os(dir + "/manifest.json");
  os << manifest.dump(2) << "\n";
}

inline Zoo load_zoo(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw ConfigError("zoo manifest not found in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  Zoo zoo;
  for (const auto& entry : manifest) {
    OpponentSnapshot s;
    s.id = entry.at("id").get<std::string>();
    s.role = role_from_name(entry.at("role").get<std::string>());
    s.reasoning = entry.at("reasoning").get<bool>();
    s.provenance.run_id = entry.at("run").get<int>();
    s.provenance.iteration = entry.at("iteration").get<int>();
    s.provenance.variant_tag = entry.at("variant").get<std::string>();
    nn::Checkpoint pc = nn::load_checkpoint(dir + "/" + entry.at("policy").get<std::string>());
    s.policy = {pc.spec, pc.params};
    nn::Checkpoint vc = nn::load_checkpoint(dir + "/" + entry.at("value").get<std::string>());
    s.value = {vc.spec, vc.params};
    if (s.reasoning) {
      nn::Checkpoint ac =
          nn::load_checkpoint(dir + "/" + entry.at("agent_model").get<std::string>());
      s.agent_model = {ac.spec, ac.params};
    }
    zoo.snapshots.push_back(std::move(s));
  }
  return zoo;
}

}  // namespace mbom::opponents
