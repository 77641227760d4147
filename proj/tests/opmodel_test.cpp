#include "mbom/opmodel.hpp"

#include <gtest/gtest.h>

#include "mbom/oracle.hpp"
#include "test_util.hpp"

using namespace mbom;
using namespace mbom::opmodel;
using testutil::exact_iop;
using testutil::one_hot_state;
using testutil::tabular_world;

namespace {

std::vector<envs::TransitionRecord> repeat_record(const envs::TransitionRecord& tr, int n) {
  return std::vector<envs::TransitionRecord>(n, tr);
}

TEST(TrainEnvModel, SingleTransitionInterpolates) {
  Rng rng(1);
  EnvModel model = make_env_model(3, 2, 2, {16, 8}, rng);
  envs::TransitionRecord tr{{0.2, -0.4, 0.9}, 1, 0, {0.5, 0.1, -0.3}, 0.7, -0.7};
  auto buffer = repeat_record(tr, 32);
  train_env_model(model, buffer, 200, 4, 1e-3, rng);
  Vec s_next;
  double r, r_o;
  model.predict(tr.s, tr.a, tr.a_o, s_next, r, r_o);
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(s_next[d], tr.s_next[d], 1e-3);
  EXPECT_NEAR(r, tr.r, 1e-3);
  EXPECT_NEAR(r_o, tr.r_o, 1e-3);
}

TEST(TrainEnvModel, LearnsExactTabularDynamics) {
  Rng rng(2);
  auto game = envs::tabular_game({{1.0, -1.0}, {-1.0, 1.0}}, 4);
  EnvModel model = make_env_model(1, 2, 2, {16, 8}, rng);
  std::vector<envs::TransitionRecord> buffer;
  for (int rep = 0; rep < 16; ++rep)
    for (int a = 0; a < 2; ++a)
      for (int ao = 0; ao < 2; ++ao) {
        game->reset(0);
        envs::StepResult res = game->step(a, ao);
        buffer.push_back({{1.0}, a, ao, res.next_state.observation, res.r, res.r_o});
      }
  train_env_model(model, buffer, 400, 8, 1e-3, rng);
  double worst = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int ao = 0; ao < 2; ++ao) {
      Vec s_next;
      double r, r_o;
      model.predict(Vec{1.0}, a, ao, s_next, r, r_o);
      const double expect = a == ao ? 1.0 : -1.0;
      worst = std::max({worst, std::abs(s_next[0] - 1.0), std::abs(r - expect),
                        std::abs(r_o + expect)});
    }
  EXPECT_LT(worst, 0.05);
}

TEST(TrainEnvModel, ZeroRewardGameDrivesRewardsToZero) {
  Rng rng(3);
  EnvModel model = make_env_model(1, 2, 2, {16, 8}, rng);
  std::vector<envs::TransitionRecord> buffer;
  for (int rep = 0; rep < 64; ++rep)
    buffer.push_back({{1.0}, rep % 2, (rep / 2) % 2, {1.0}, 0.0, 0.0});
  train_env_model(model, buffer, 200, 64, 1e-3, rng);
  for (int a = 0; a < 2; ++a)
    for (int ao = 0; ao < 2; ++ao) {
      Vec s_next;
      double r, r_o;
      model.predict(Vec{1.0}, a, ao, s_next, r, r_o);
      EXPECT_LT(std::abs(r), 0.01);
      EXPECT_LT(std::abs(r_o), 0.01);
    }
}

TEST(TrainEnvModel, EmptyBufferIsUsageError) {
  Rng rng(4);
  EnvModel model = make_env_model(1, 2, 2, {8}, rng);
  std::vector<envs::TransitionRecord> empty;
  EXPECT_THROW(train_env_model(model, empty, 1, 8, 1e-3, rng), UsageError);
}

std::vector<std::pair<Vec, int>> label_states(Rng& rng, int count, int obs_dim,
                                              const std::function<int(Rng&)>& label) {
  std::vector<std::pair<Vec, int>> pairs;
  for (int i = 0; i < count; ++i) {
    Vec s(obs_dim);
    for (double& x : s) x = rng.uniform(-1.0, 1.0);
    pairs.emplace_back(std::move(s), label(rng));
  }
  return pairs;
}

TEST(TrainLevel0, ConstantOpponentIsLearned) {
  Rng rng(5);
  Iop iop = make_iop(3, 4, {16, 8}, rng);
  auto pairs = label_states(rng, 128, 3, [](Rng&) { return 2; });
  train_level0(iop, pairs, 300, 64, 1e-3, rng);
  for (int i = 0; i < 10; ++i) EXPECT_GT(iop.probs(pairs[i].first)[2], 0.95);
}

TEST(TrainLevel0, UniformOpponentIsLearned) {
  Rng rng(6);
  Iop iop = make_iop(3, 4, {16, 8}, rng);
  auto pairs = label_states(rng, 2048, 3, [](Rng& r) { return r.below(4); });
  train_level0(iop, pairs, 60, 64, 1e-3, rng);
  Vec probe{0.1, -0.2, 0.3};
  Vec p = iop.probs(probe);
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(p[a], 0.25, 0.05);
}

TEST(TrainLevel0, EmpiricalFrequenciesAreTheFixedPoint) {
  Rng rng(7);
  Iop iop = make_iop(2, 2, {8}, rng);
  Vec s{0.5, -0.5};
  std::vector<std::pair<Vec, int>> pairs{{s, 0}, {s, 0}, {s, 1}};
  train_level0(iop, pairs, 500, 3, 1e-3, rng);
  Vec p = iop.probs(s);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 0.05);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 0.05);
}

TEST(TrainLevel0, Preconditions) {
  Rng rng(8);
  Iop iop = make_iop(2, 2, {8}, rng);
  std::vector<std::pair<Vec, int>> empty;
  EXPECT_THROW(train_level0(iop, empty, 1, 8, 1e-3, rng), UsageError);
  iop.level = 1;
  std::vector<std::pair<Vec, int>> one{{Vec{0.0, 0.0}, 0}};
  EXPECT_THROW(train_level0(iop, one, 1, 8, 1e-3, rng), UsageError);
}

oracle::TabularModel reward_only_model(const Vec& r_o_per_action) {
  oracle::TabularModel m;
  m.n_states = 1;
  m.n_agent = 2;
  m.n_opp = static_cast<int>(r_o_per_action.size());
  const int n = m.n_agent * m.n_opp;
  m.transition.assign(n, Vec{1.0});
  m.reward.assign(n, 0.0);
  m.reward_opp.resize(n);
  for (int a = 0; a < m.n_agent; ++a)
    for (int ao = 0; ao < m.n_opp; ++ao) m.reward_opp[m.idx(0, a, ao)] = r_o_per_action[ao];
  return m;
}

TEST(ImagineBestResponse, DepthZeroPicksArgmaxModelReward) {
  oracle::TabularModel m = reward_only_model({0.1, 0.9, 0.3});
  oracle::TabularPolicy agent;
  agent.rows = {Vec{1.0, 0.0}};
  RolloutWorld world = tabular_world(m, agent);
  Rng rng(9);
  EXPECT_EQ(imagine_best_response(world, one_hot_state(0, 1), 0, 1, RolloutMode::plain, 0.9, rng),
            1);
}

TEST(ImagineBestResponse, TieBreaksToLowestActionId) {
  oracle::TabularModel m = reward_only_model({0.4, 0.4, 0.4});
  oracle::TabularPolicy agent;
  agent.rows = {Vec{1.0, 0.0}};
  RolloutWorld world = tabular_world(m, agent);
  Rng rng(10);
  EXPECT_EQ(imagine_best_response(world, one_hot_state(0, 1), 2, 4, RolloutMode::plain, 0.9, rng),
            0);
}

TEST(ImagineBestResponse, MatchesBruteForceOracleOnRandomGames) {
  Rng rng(11);
  int checked = 0;
  for (int inst = 0; inst < 50; ++inst) {
    oracle::InstanceOptions opt;
    opt.min_actions = 2;
    opt.max_actions = 2;
    opt.deterministic_transitions = true;
    oracle::TabularModel m = oracle::random_model(rng, opt);
    oracle::TabularPolicy agent = oracle::random_policy(rng, m.n_states, m.n_agent, true);
    RolloutWorld world = tabular_world(m, agent);
    for (int s = 0; s < m.n_states; ++s) {
      oracle::BestResponse br = oracle::brute_force_best_response(m, agent, s, 2, 0.9);
      const int got = imagine_best_response(world, one_hot_state(s, m.n_states), 2, 1,
                                            RolloutMode::plain, 0.9, rng);
      EXPECT_EQ(got, br.action) << "instance " << inst << " state " << s;
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(FinetuneIop, MovesProbabilityTowardTargets) {
  Rng rng(12);
  Iop source = make_iop(3, 4, {16, 8}, rng);
  auto pairs = label_states(rng, 16, 3, [](Rng&) { return 3; });
  Iop next = finetune_iop(source, pairs, 3, 0.005, rng);
  for (const auto& [s, target] : pairs)
    EXPECT_GT(next.probs(s)[3], source.probs(s)[3]);
  EXPECT_EQ(next.level, source.level + 1);
}

TEST(FinetuneIop, ZeroStepsCopiesParameters) {
  Rng rng(13);
  Iop source = make_iop(3, 4, {8}, rng);
  auto pairs = label_states(rng, 4, 3, [](Rng&) { return 1; });
  Iop next = finetune_iop(source, pairs, 0, 0.005, rng);
  EXPECT_EQ(next.net.params.flat, source.net.params.flat);
}

TEST(FinetuneIop, LevelBookkeepingAndEmptyPairs) {
  Rng rng(14);
  Iop source = make_iop(3, 4, {8}, rng);
  source.level = 1;
  std::vector<std::pair<Vec, int>> empty;
  Iop next = finetune_iop(source, empty, 3, 0.005, rng);
  EXPECT_EQ(next.level, 2);
  EXPECT_EQ(next.net.params.flat, source.net.params.flat);
}

TEST(FinetuneLevel0, RecentActionsIncreaseProbability) {
  Rng rng(15);
  Iop iop = make_iop(3, 4, {16, 8}, rng);
  auto recent = label_states(rng, 16, 3, [](Rng&) { return 1; });
  Vec before = iop.probs(recent[0].first);
  finetune_level0(iop, recent, 3, 0.005, rng);
  EXPECT_GT(iop.probs(recent[0].first)[1], before[1]);
}

TEST(FinetuneLevel0, EmptyRecentIsANoOp) {
  Rng rng(16);
  Iop iop = make_iop(3, 4, {8}, rng);
  Vec before = iop.net.params.flat;
  std::vector<std::pair<Vec, int>> empty;
  finetune_level0(iop, empty, 3, 0.005, rng);
  EXPECT_EQ(iop.net.params.flat, before);
}

TEST(FinetuneLevel0, ZeroLearningRateLeavesParamsUnchanged) {
  Rng rng(17);
  Iop iop = make_iop(3, 4, {8}, rng);
  auto recent = label_states(rng, 8, 3, [](Rng&) { return 0; });
  Vec before = iop.net.params.flat;
  finetune_level0(iop, recent, 3, 0.0, rng);
  finetune_level0(iop, recent, 3, 0.0, rng);
  EXPECT_EQ(iop.net.params.flat, before);
}

IopStack exact_stack(const std::vector<Vec>& dists, int obs_dim) {
  IopStack stack;
  for (std::size_t m = 0; m < dists.size(); ++m) {
    Iop iop = exact_iop(dists[m], obs_dim);
    iop.level = static_cast<int>(m);
    stack.levels.push_back(std::move(iop));
  }
  return stack;
}

TEST(BayesPosterior, EqualLikelihoodsKeepThePrior) {
  IopStack stack = exact_stack({{0.4, 0.6}, {0.4, 0.6}, {0.4, 0.6}}, 2);
  Vec prior{0.2, 0.3, 0.5};
  Vec post = bayes_posterior(stack, Vec{0.0, 0.0}, 1, prior);
  for (int m = 0; m < 3; ++m) EXPECT_NEAR(post[m], prior[m], 1e-12);
}

TEST(BayesPosterior, UniformPriorReturnsNormalizedLikelihoods) {
  IopStack stack = exact_stack({{0.8, 0.2}, {0.2, 0.8}}, 2);
  Vec post = bayes_posterior(stack, Vec{0.0, 0.0}, 0, Vec{0.5, 0.5});
  EXPECT_NEAR(post[0], 0.8, 1e-9);
  EXPECT_NEAR(post[1], 0.2, 1e-9);
}

TEST(BayesPosterior, HandEvaluatedThreeLevelCase) {
  IopStack stack = exact_stack({{0.5, 0.5}, {0.3, 0.7}, {0.2, 0.8}}, 2);
  Vec post = bayes_posterior(stack, Vec{0.0, 0.0}, 0, Vec{0.2, 0.3, 0.5});
  // (0.5*0.2, 0.3*0.3, 0.2*0.5) / 0.29
  EXPECT_NEAR(post[0], 0.10 / 0.29, 1e-9);
  EXPECT_NEAR(post[1], 0.09 / 0.29, 1e-9);
  EXPECT_NEAR(post[2], 0.10 / 0.29, 1e-9);
}

TEST(BayesPosterior, FloorPreventsZeroDivision) {
  // one level assigns (numerically) zero mass to the observed action
  IopStack stack = exact_stack({{1.0, 0.0}, {1.0, 0.0}}, 2);
  Vec post = bayes_posterior(stack, Vec{0.0, 0.0}, 1, Vec{0.5, 0.5});
  EXPECT_TRUE(is_probability_vector(post, 1e-9));
  EXPECT_NEAR(post[0], 0.5, 1e-9);
}

TEST(UpdateMixer, SingleEntryDecaysOnce) {
  MixerState mx = make_mixer(2, 0.9, 10, 1.0);
  update_mixer(mx, Vec{1.0, 0.0});
  EXPECT_NEAR(mx.psi[0], 0.9, 1e-12);
  EXPECT_NEAR(mx.psi[1], 0.0, 1e-12);
  EXPECT_GT(mx.alpha[0], mx.alpha[1]);
  EXPECT_NEAR(mx.prior[0], 1.0, 1e-12);
}

TEST(UpdateMixer, ConstantPosteriorsConvergeThePrior) {
  MixerState mx = make_mixer(2, 0.7, 5, 1.0);
  Vec post{0.3, 0.7};
  for (int i = 0; i < 20; ++i) update_mixer(mx, post);
  EXPECT_NEAR(mx.prior[0], 0.3, 1e-12);
  EXPECT_NEAR(mx.prior[1], 0.7, 1e-12);
}

TEST(UpdateMixer, HandEvaluatedDecayedSum) {
  MixerState mx = make_mixer(2, 0.5, 2, 1.0);
  update_mixer(mx, Vec{1.0, 0.0});
  update_mixer(mx, Vec{0.0, 1.0});
  EXPECT_NEAR(mx.psi[0], 0.25, 1e-12);  // age 2
  EXPECT_NEAR(mx.psi[1], 0.5, 1e-12);   // age 1
}

TEST(UpdateMixer, WindowEvictsOldPosteriors) {
  MixerState mx = make_mixer(2, 1.0, 3, 1.0);
  for (int i = 0; i < 10; ++i) update_mixer(mx, Vec{1.0, 0.0});
  update_mixer(mx, Vec{0.0, 1.0});
  EXPECT_EQ(mx.history.size(), 3u);
  EXPECT_NEAR(mx.prior[1], 1.0 / 3.0, 1e-12);
}

TEST(SofterSoftmax, EqualValuesAreUniform) {
  Vec w = softer_softmax(Vec{0.7, 0.7, 0.7}, 2.0);
  for (double x : w) EXPECT_NEAR(x, 1.0 / 3.0, 1e-12);
}

TEST(SofterSoftmax, HugeTemperatureFlattens) {
  Vec w = softer_softmax(Vec{1.0, 0.0}, 1e6);
  EXPECT_NEAR(w[0], 0.5, 1e-5);
  EXPECT_NEAR(w[1], 0.5, 1e-5);
}

TEST(SofterSoftmax, ClosedFormAtTemperatureOne) {
  Vec w = softer_softmax(Vec{1.0, 0.0}, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(w[0], e / (e + 1.0), 1e-12);
  EXPECT_NEAR(w[1], 1.0 / (e + 1.0), 1e-12);
}

TEST(SofterSoftmax, PreservesOrdering) {
  Rng rng(18);
  for (int trial = 0; trial < 200; ++trial) {
    Vec v(4);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    Vec w = softer_softmax(v, rng.uniform(0.1, 5.0));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (v[i] > v[j]) EXPECT_GT(w[i], w[j]);
  }
}

TEST(MixedIop, SingleLevelIsIdentity) {
  Rng rng(19);
  Iop iop = make_iop(3, 4, {8}, rng);
  IopStack stack = make_stack(iop, 1);
  Vec s{0.1, 0.2, 0.3};
  Vec mixed = mixed_iop(stack, Vec{1.0}, s);
  EXPECT_EQ(mixed, iop.probs(s));
}

TEST(MixedIop, DegenerateWeightsPickLevelZero) {
  Rng rng(20);
  IopStack stack = make_stack(make_iop(3, 4, {8}, rng), 3);
  // make the higher levels different
  stack.levels[1] = exact_iop(Vec{0.7, 0.1, 0.1, 0.1}, 3);
  stack.levels[2] = exact_iop(Vec{0.1, 0.7, 0.1, 0.1}, 3);
  Vec s{0.3, -0.3, 0.0};
  Vec mixed = mixed_iop(stack, Vec{1.0, 0.0, 0.0}, s);
  EXPECT_EQ(mixed, stack.levels[0].probs(s));
}

TEST(MixedIop, ConvexCombinationOfPointMasses) {
  IopStack stack = exact_stack({{1.0, 0.0}, {0.0, 1.0}}, 2);
  Vec mixed = mixed_iop(stack, Vec{0.3, 0.7}, Vec{0.0, 0.0});
  EXPECT_NEAR(mixed[0], 0.3, 1e-9);
  EXPECT_NEAR(mixed[1], 0.7, 1e-9);
}

struct EpochFixture {
  Rng rng{21};
  EnvModel model = make_env_model(3, 2, 4, {16, 8}, rng);
  ppo::ConditionedPolicy policy = ppo::make_conditioned_policy(3, 4, 2, {16, 8}, rng);
  ppo::ValueNet value = ppo::make_value_net(3, {8}, rng);
  std::vector<std::pair<Vec, int>> recent;
  std::vector<Vec> sim_states;

  EpochFixture() {
    for (int i = 0; i < 8; ++i) {
      Vec s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      recent.emplace_back(s, rng.below(4));
      sim_states.push_back(s);
    }
  }
};

TEST(MbomEpoch, SingleLevelCollapsesToLevelZero) {
  EpochFixture fx;
  IopStack stack = make_stack(make_iop(3, 4, {16, 8}, fx.rng), 1);
  MixerState mixer = make_mixer(1, 0.9, 10, 1.0);
  MbomOptions opt;
  opt.k = 1;
  MbomEpochResult res =
      mbom_epoch(stack, mixer, fx.model, fx.policy, fx.value, fx.recent, fx.sim_states, opt, fx.rng);
  for (const Vec& s : fx.sim_states)
    EXPECT_EQ(res.predictor(s), stack.levels[0].probs(s));
}

TEST(MbomEpoch, RandomTargetVariantRunsWithoutModelRollouts) {
  EpochFixture fx;
  IopStack stack = make_stack(make_iop(3, 4, {16, 8}, fx.rng), 3);
  MixerState mixer = make_mixer(3, 0.9, 10, 1.0);
  MbomOptions opt;
  opt.random_finetune_targets = true;
  MbomEpochResult res =
      mbom_epoch(stack, mixer, fx.model, fx.policy, fx.value, fx.recent, fx.sim_states, opt, fx.rng);
  EXPECT_EQ(stack.levels[1].level, 1);
  EXPECT_EQ(stack.levels[2].level, 2);
  EXPECT_TRUE(is_probability_vector(res.predictor(fx.sim_states[0]), 1e-9));
}

TEST(MbomEpoch, UniformMixingForcesUniformAlpha) {
  EpochFixture fx;
  IopStack stack = make_stack(make_iop(3, 4, {16, 8}, fx.rng), 3);
  MixerState mixer = make_mixer(3, 0.9, 10, 1.0);
  MbomOptions opt;
  opt.k = 1;
  opt.uniform_mixing = true;
  MbomEpochResult res =
      mbom_epoch(stack, mixer, fx.model, fx.policy, fx.value, fx.recent, fx.sim_states, opt, fx.rng);
  for (double a : res.alpha) EXPECT_NEAR(a, 1.0 / 3.0, 1e-12);
  Vec expect = mixed_iop(stack, res.alpha, fx.sim_states[0]);
  EXPECT_EQ(res.predictor(fx.sim_states[0]), expect);
}

TEST(MbomEpoch, FixedLevelVariantUsesThatLevelOnly) {
  EpochFixture fx;
  IopStack stack = make_stack(make_iop(3, 4, {16, 8}, fx.rng), 3);
  MixerState mixer = make_mixer(3, 0.9, 10, 1.0);
  MbomOptions opt;
  opt.k = 1;
  opt.fixed_level = 1;
  MbomEpochResult res =
      mbom_epoch(stack, mixer, fx.model, fx.policy, fx.value, fx.recent, fx.sim_states, opt, fx.rng);
  EXPECT_EQ(res.predictor(fx.sim_states[0]), stack.levels[1].probs(fx.sim_states[0]));
}

// Deriving the higher levels must never touch level 0 outside its own
// explicit finetune.
TEST(MbomEpoch, LevelZeroImmutableWithoutRecentActions) {
  EpochFixture fx;
  IopStack stack = make_stack(make_iop(3, 4, {16, 8}, fx.rng), 3);
  MixerState mixer = make_mixer(3, 0.9, 10, 1.0);
  Vec level0_before = stack.levels[0].net.params.flat;
  MbomOptions opt;
  opt.k = 1;
  std::vector<std::pair<Vec, int>> no_recent;
  mbom_epoch(stack, mixer, fx.model, fx.policy, fx.value, no_recent, fx.sim_states, opt, fx.rng);
  EXPECT_EQ(stack.levels[0].net.params.flat, level0_before);
}

TEST(MbomEpoch, ProbabilityOutputsEverywhere) {
  EpochFixture fx;
  IopStack stack = make_stack(make_iop(3, 4, {16, 8}, fx.rng), 2);
  MixerState mixer = make_mixer(2, 0.9, 10, 1.0);
  MbomOptions opt;
  opt.k = 1;
  MbomEpochResult res =
      mbom_epoch(stack, mixer, fx.model, fx.policy, fx.value, fx.recent, fx.sim_states, opt, fx.rng);
  EXPECT_TRUE(is_probability_vector(mixer.prior, 1e-9));
  EXPECT_TRUE(is_probability_vector(mixer.alpha, 1e-9));
  EXPECT_TRUE(is_probability_vector(res.alpha, 1e-9));
  for (const Vec& s : fx.sim_states) {
    EXPECT_TRUE(is_probability_vector(res.predictor(s), 1e-9));
    for (const Iop& iop : stack.levels) EXPECT_TRUE(is_probability_vector(iop.probs(s), 1e-9));
  }
}

// Posterior chaining concentrates on the generating level when the
// opponent is one of the stack's own policies.
TEST(PosteriorConvergence, ChainedBayesFindsTheTrueLevel) {
  Rng rng(23);
  int hits = 0;
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<Vec> dists;
    Rng gen(derive_seed(100, inst));
    for (int m = 0; m < 3; ++m) {
      Vec d(4);
      double total = 0.0;
      for (double& x : d) total += (x = gen.uniform() + 0.05);
      for (double& x : d) x /= total;
      dists.push_back(d);
    }
    // enforce pairwise separation
    bool distinct = true;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        double l1 = 0.0;
        for (int a = 0; a < 4; ++a) l1 += std::abs(dists[i][a] - dists[j][a]);
        if (l1 < 0.3) distinct = false;
      }
    if (!distinct) {
      ++hits;  // skip: instance does not meet the distinguishability premise
      continue;
    }
    IopStack stack = exact_stack(dists, 2);
    const int truth = gen.below(3);
    Vec chain(3, 1.0 / 3.0);
    bool converged = false;
    for (int t = 0; t < 200 && !converged; ++t) {
      Vec s{gen.uniform(-1, 1), gen.uniform(-1, 1)};
      const int a_o = gen.categorical(dists[truth]);
      chain = bayes_posterior(stack, s, a_o, chain, 0.0);
      if (chain[truth] > 0.99) converged = true;
    }
    if (converged) ++hits;
  }
  EXPECT_GE(hits, 4);
}

// The mixture reproduces the opponent's marginal action distribution
// exactly when the weights equal the true mixing probabilities, so its
// L1 loss there lower-bounds the loss at any other weights.
TEST(MixtureWeights, TrueProbabilitiesMinimizeMarginalLoss) {
  Rng rng(24);
  for (int inst = 0; inst < 20; ++inst) {
    const int M = 3, n_actions = 4;
    std::vector<Vec> dists;
    for (int m = 0; m < M; ++m) {
      Vec d(n_actions);
      double total = 0.0;
      for (double& x : d) total += (x = rng.uniform() + 0.02);
      for (double& x : d) x /= total;
      dists.push_back(d);
    }
    Vec p(M);
    double total = 0.0;
    for (double& x : p) total += (x = rng.uniform() + 0.02);
    for (double& x : p) x /= total;

    IopStack stack = exact_stack(dists, 2);
    Vec s{0.0, 0.0};
    Vec marginal(n_actions, 0.0);
    for (int m = 0; m < M; ++m)
      for (int a = 0; a < n_actions; ++a) marginal[a] += p[m] * dists[m][a];

    auto l1_loss = [&](const Vec& alpha) {
      Vec mix = mixed_iop(stack, alpha, s);
      double loss = 0.0;
      for (int a = 0; a < n_actions; ++a) loss += std::abs(mix[a] - marginal[a]);
      return loss;
    };
    const double at_p = l1_loss(p);
    EXPECT_LT(at_p, 1e-9);
    for (int trial = 0; trial < 100; ++trial) {
      Vec alpha(M);
      double t2 = 0.0;
      for (double& x : alpha) t2 += (x = rng.uniform() + 1e-6);
      for (double& x : alpha) x /= t2;
      EXPECT_LE(at_p, l1_loss(alpha) + 1e-12);
    }
  }
}

}  // namespace
