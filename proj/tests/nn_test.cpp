#include "mbom/nn.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "test_util.hpp"

using namespace mbom;
using namespace mbom::nn;

namespace {

NetSpec spec_of(std::vector<int> sizes, Head head) {
  NetSpec s;
  s.layer_sizes = std::move(sizes);
  s.output_head = head;
  return s;
}

TEST(Forward, ZeroParamsLinearHeadGivesZeros) {
  NetSpec spec = spec_of({3, 5, 2}, Head::linear);
  ParamSet p = zero_params(spec);
  Vec out = forward(spec, p, Vec{0.7, -1.3, 2.0});
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ZeroParamsSoftmaxIsUniform) {
  NetSpec spec = spec_of({3, 5, 4}, Head::softmax);
  ParamSet p = zero_params(spec);
  Vec out = forward(spec, p, Vec{0.7, -1.3, 2.0});
  ASSERT_EQ(out.size(), 4u);
  for (double v : out) EXPECT_NEAR(v, 0.25, 1e-12);
}

// Oracle: a straight-line scalar re-implementation of the 3-4-2 forward
// arithmetic, independent of the library's layer loop.
TEST(Forward, MatchesScalarLoopReimplementation) {
  NetSpec spec = spec_of({3, 4, 2}, Head::linear);
  Rng rng(42);
  ParamSet p = init_params(spec, rng);
  Vec x{0.3, -0.8, 1.1};

  const double* w0 = p.flat.data() + spec.weight_offset(0);
  const double* b0 = p.flat.data() + spec.bias_offset(0);
  const double* w1 = p.flat.data() + spec.weight_offset(1);
  const double* b1 = p.flat.data() + spec.bias_offset(1);
  double h[4];
  for (int i = 0; i < 4; ++i) {
    double z = b0[i];
    for (int j = 0; j < 3; ++j) z += w0[i * 3 + j] * x[j];
    h[i] = z > 0.0 ? z : 0.0;
  }
  double y[2];
  for (int i = 0; i < 2; ++i) {
    double z = b1[i];
    for (int j = 0; j < 4; ++j) z += w1[i * 4 + j] * h[j];
    y[i] = z;
  }

  Vec out = forward(spec, p, x);
  EXPECT_DOUBLE_EQ(out[0], y[0]);
  EXPECT_DOUBLE_EQ(out[1], y[1]);
}

TEST(Forward, ShapeMismatchIsConfigError) {
  NetSpec spec = spec_of({3, 4, 2}, Head::linear);
  ParamSet p = zero_params(spec);
  EXPECT_THROW(forward(spec, p, Vec{1.0, 2.0}), ConfigError);
  p.flat.pop_back();
  EXPECT_THROW(forward(spec, p, Vec{1.0, 2.0, 3.0}), ConfigError);
}

TEST(Backward, SingleLinearLayerWeightGradEqualsInput) {
  NetSpec spec = spec_of({3, 2}, Head::linear);
  Rng rng(7);
  ParamSet p = init_params(spec, rng);
  Vec x{0.5, -2.0, 3.25};
  Trace tr;
  forward_traced(spec, p, x, tr);
  // loss = output[0]
  ParamSet g = backward(spec, p, tr, Vec{1.0, 0.0});
  const double* gw = g.flat.data() + spec.weight_offset(0);
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(gw[0 * 3 + j], x[j]);
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(gw[1 * 3 + j], 0.0);
}

TEST(Backward, ZeroOutputGradGivesZeroGradients) {
  NetSpec spec = spec_of({4, 6, 3}, Head::softmax);
  Rng rng(11);
  ParamSet p = init_params(spec, rng);
  Vec x{0.1, 0.2, -0.3, 0.4};
  Trace tr;
  forward_traced(spec, p, x, tr);
  ParamSet g = backward(spec, p, tr, Vec(3, 0.0));
  for (double v : g.flat) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MissingTraceIsUsageError) {
  NetSpec spec = spec_of({4, 6, 3}, Head::softmax);
  Rng rng(11);
  ParamSet p = init_params(spec, rng);
  Trace tr;  // never filled
  EXPECT_THROW(backward(spec, p, tr, Vec(3, 0.0)), UsageError);
}

TEST(Backward, SoftmaxCrossEntropyMatchesFiniteDifferences) {
  NetSpec spec = spec_of({4, 8, 3}, Head::softmax);
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    double err = testutil::max_grad_rel_err(spec, rng);
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(OptStep, ZeroGradsFreshStateLeaveParamsUnchanged) {
  NetSpec spec = spec_of({2, 3, 1}, Head::linear);
  Rng rng(5);
  ParamSet p = init_params(spec, rng);
  Vec before = p.flat;
  OptState opt = make_opt(spec, 1e-3);
  opt_step(p, zero_params(spec), opt);
  EXPECT_EQ(p.flat, before);
  EXPECT_EQ(opt.step, 1);
  EXPECT_EQ(p.version, 1u);
}

TEST(OptStep, PositiveGradientDecreasesParameter) {
  NetSpec spec = spec_of({1, 1}, Head::linear);
  ParamSet p = zero_params(spec);
  p.flat[0] = 1.0;
  OptState opt = make_opt(spec, 0.1);
  ParamSet g = zero_params(spec);
  g.flat[0] = 2.5;
  opt_step(p, g, opt);
  EXPECT_LT(p.flat[0], 1.0);
}

// Closed form: the bowl 0.5*(p0^2 + p1^2) has its minimum 0 at the origin.
TEST(OptStep, QuadraticBowlConverges) {
  NetSpec spec = spec_of({2, 1}, Head::linear);  // shape only carries 2+1 params
  ParamSet p;
  p.flat = {1.0, 1.0};
  OptState opt;
  opt.m.assign(2, 0.0);
  opt.v.assign(2, 0.0);
  opt.learning_rate = 0.05;
  ParamSet g;
  g.flat.assign(2, 0.0);
  for (int step = 0; step < 200; ++step) {
    g.flat = p.flat;  // gradient of the bowl
    opt_step(p, g, opt);
  }
  double loss = 0.5 * (p.flat[0] * p.flat[0] + p.flat[1] * p.flat[1]);
  EXPECT_LT(loss, 1e-3);
}

TEST(OptStep, NanGradientIsTrainingError) {
  NetSpec spec = spec_of({1, 1}, Head::linear);
  ParamSet p = zero_params(spec);
  OptState opt = make_opt(spec, 0.1);
  ParamSet g = zero_params(spec);
  g.flat[0] = std::nan("");
  EXPECT_THROW(opt_step(p, g, opt), TrainingError);
}

TEST(CloneParams, PerturbingOriginalLeavesCloneIntact) {
  NetSpec spec = spec_of({2, 2}, Head::linear);
  Rng rng(3);
  ParamSet p = init_params(spec, rng);
  ParamSet c = clone_params(p);
  Vec snapshot = c.flat;
  p.flat[0] += 5.0;
  EXPECT_EQ(c.flat, snapshot);
}

TEST(CloneParams, TwoClonesBitwiseEqual) {
  NetSpec spec = spec_of({2, 4, 2}, Head::softmax);
  Rng rng(9);
  ParamSet p = init_params(spec, rng);
  ParamSet a = clone_params(p);
  ParamSet b = clone_params(p);
  EXPECT_EQ(a.flat, b.flat);
  EXPECT_EQ(a.version, b.version);
}

TEST(CloneParams, TrainingCloneDoesNotBumpOriginalVersion) {
  NetSpec spec = spec_of({2, 4, 2}, Head::softmax);
  Rng rng(9);
  ParamSet p = init_params(spec, rng);
  ParamSet c = clone_params(p);
  OptState opt = make_opt(spec, 1e-2);
  ParamSet g = zero_params(spec);
  for (double& v : g.flat) v = 0.1;
  for (int i = 0; i < 3; ++i) opt_step(c, g, opt);
  EXPECT_EQ(p.version, 0u);
  EXPECT_EQ(c.version, 3u);
}

TEST(Invariants, SoftmaxHeadIsProbabilityVector) {
  NetSpec spec = spec_of({5, 16, 7}, Head::softmax);
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    ParamSet p = init_params(spec, rng);
    Vec x(5);
    for (double& v : x) v = rng.uniform(-3.0, 3.0);
    Vec out = forward(spec, p, x);
    double sum = 0.0;
    for (double v : out) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Invariants, SeededTrainingIsBitwiseDeterministic) {
  auto run = [] {
    NetSpec spec = spec_of({3, 8, 4}, Head::softmax);
    Rng rng(777);
    ParamSet p = init_params(spec, rng);
    OptState opt = make_opt(spec, 1e-3);
    Trace tr;
    for (int i = 0; i < 25; ++i) {
      Vec x(3);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      forward_traced(spec, p, x, tr);
      Vec og(4);
      for (double& v : og) v = rng.uniform(-1.0, 1.0);
      ParamSet g = backward(spec, p, tr, og);
      opt_step(p, g, opt);
    }
    return p;
  };
  ParamSet a = run();
  ParamSet b = run();
  ASSERT_EQ(a.flat.size(), b.flat.size());
  for (std::size_t i = 0; i < a.flat.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.flat[i], &b.flat[i], 8), 0);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  NetSpec spec = spec_of({6, 32, 16, 3}, Head::softmax);
  Rng rng(31337);
  ParamSet p = init_params(spec, rng);
  p.version = 42;
  std::string path = (std::filesystem::temp_directory_path() / "mbom_nn_ckpt_test.bin").string();
  save_checkpoint(path, spec, p);
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.spec, spec);
  EXPECT_EQ(ck.params.version, 42u);
  ASSERT_EQ(ck.params.flat.size(), p.flat.size());
  for (std::size_t i = 0; i < p.flat.size(); ++i)
    EXPECT_EQ(std::memcmp(&ck.params.flat[i], &p.flat[i], 8), 0);
  std::filesystem::remove(path);
}

}  // namespace
