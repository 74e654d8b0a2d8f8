#include <cmath>

#include <gtest/gtest.h>

#include "lfdet/errors.hpp"
#include "lfdet/scene.hpp"
#include "lfdet/suites.hpp"
#include "lfdet/toy.hpp"

namespace {

using lfdet::ToyConfig;
using lfdet::ToyModel;

TEST(GenScene, DeterministicAndInBounds) {
  const lfdet::SceneOptions opt;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto n = static_cast<std::size_t>(seed % 5);
    const lfdet::Scene s = lfdet::gen_scene(seed, n, opt);
    EXPECT_EQ(s, lfdet::gen_scene(seed, n, opt));
    EXPECT_EQ(s.image.shape(), (lfdet::Shape{1, 64, 64}));
    ASSERT_EQ(s.gts.size(), n);
    for (const auto& g : s.gts) {
      EXPECT_GE(g.box.w(), 8.0);
      EXPECT_LE(g.box.w(), 32.0);
      EXPECT_GE(g.box.h(), 8.0);
      EXPECT_LE(g.box.h(), 32.0);
      EXPECT_GE(g.box.x1(), 0.0);
      EXPECT_GE(g.box.y1(), 0.0);
      EXPECT_LE(g.box.x2(), 64.0);
      EXPECT_LE(g.box.y2(), 64.0);
      EXPECT_LE(g.class_id, 1u);
    }
  }
}

TEST(GenScene, EmptySceneIsNoiseOnly) {
  const lfdet::Scene s = lfdet::gen_scene(3, 0);
  EXPECT_TRUE(s.gts.empty());
  for (double v : s.image.data()) EXPECT_LE(std::abs(v), 0.05);
}

TEST(GenScene, Errors) {
  EXPECT_THROW(lfdet::gen_scene(0, 5), lfdet::ContractError);
  EXPECT_THROW(lfdet::gen_scene(0, 1, {.size = 16, .min_extent = 8, .max_extent = 32}),
               lfdet::ContractError);
}

TEST(ToyConfig, ValidateRejectsInconsistencies) {
  ToyConfig c;
  c.validate();
  ToyConfig::two_level().validate();
  ToyConfig::miniature().validate();
  c.n_levels = 3;
  EXPECT_THROW(c.validate(), lfdet::ConfigError);
  c = ToyConfig{};
  c.anchors = {{{12, 12}}};
  EXPECT_THROW(c.validate(), lfdet::ConfigError);
  c = ToyConfig{};
  c.scene.size = 60;
  EXPECT_THROW(c.validate(), lfdet::ConfigError);
}

ToyModel zero_head_model() {
  ToyModel m = ToyModel::init(ToyConfig{}, 1);
  for (auto& t : m.head.weights) t = lfdet::Tensor::zeros(t.shape());
  for (auto& t : m.head.biases) t = lfdet::Tensor::zeros(t.shape());
  return m;
}

TEST(DetectionLoss, ZeroHeadGivesLogTwoTerms) {
  ToyModel m = zero_head_model();
  const lfdet::StepResult r = lfdet::evaluate(m, lfdet::gen_scene(4, 3));
  ASSERT_GT(r.terms.positives, 0u);
  EXPECT_NEAR(r.terms.obj, std::log(2.0), 1e-12);
  EXPECT_NEAR(r.terms.cls, 0.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(r.loss, r.terms.obj + r.terms.cls + r.terms.reg, 1e-12);
}

TEST(DetectionLoss, NoObjectsLeavesObjectnessOnly) {
  ToyModel m = zero_head_model();
  const lfdet::StepResult r = lfdet::evaluate(m, lfdet::gen_scene(4, 0));
  EXPECT_EQ(r.terms.positives, 0u);
  EXPECT_TRUE(r.assignment.entries.empty());
  EXPECT_EQ(r.terms.cls, 0.0);
  EXPECT_EQ(r.terms.reg, 0.0);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
}

TEST(DetectionLoss, RegressionWeightScalesOnlyItsTerm) {
  ToyModel m = ToyModel::init(ToyConfig{}, 2);
  const lfdet::Scene s = lfdet::gen_scene(5, 2);
  const lfdet::StepResult a = lfdet::evaluate(m, s);
  m.config.weights.reg *= 2.0;
  const lfdet::StepResult b = lfdet::evaluate(m, s, a.assignment);
  ASSERT_GT(a.terms.positives, 0u);
  EXPECT_GT(a.terms.reg, 0.0);
  EXPECT_NEAR(b.terms.reg, 2.0 * a.terms.reg, 1e-12);
  EXPECT_EQ(b.terms.obj, a.terms.obj);
  EXPECT_EQ(b.terms.cls, a.terms.cls);
}

TEST(DetectionLoss, EmptyGridIsContractError) {
  EXPECT_THROW(lfdet::detection_loss({}, {}, {}, {}, {}), lfdet::ContractError);
}

TEST(Train, SingleStepAndErrors) {
  ToyModel m = ToyModel::init(ToyConfig{}, 0);
  EXPECT_EQ(lfdet::train(m, {.steps = 1}).size(), 1u);
  EXPECT_THROW(lfdet::train(m, {.steps = 0}), lfdet::ContractError);
  EXPECT_THROW(lfdet::train(m, {.steps = 1, .lr = -1.0}), lfdet::ContractError);
}

TEST(Train, ZeroLearningRateOnOneSceneIsConstant) {
  ToyModel m = ToyModel::init(ToyConfig{}, 0);
  const auto curve = lfdet::train(m, {.steps = 5, .lr = 0.0, .scene_cycle = 1});
  for (double v : curve) EXPECT_EQ(v, curve.front());
}

TEST(Train, Deterministic) {
  ToyModel a = ToyModel::init(ToyConfig{}, 3), b = ToyModel::init(ToyConfig{}, 3);
  EXPECT_EQ(lfdet::train(a, {.steps = 8, .seed = 4}), lfdet::train(b, {.steps = 8, .seed = 4}));
}

TEST(Train, TwoLevelModelRuns) {
  ToyModel m = ToyModel::init(ToyConfig::two_level(), 0);
  const auto curve = lfdet::train(m, {.steps = 3});
  for (double v : curve) EXPECT_TRUE(std::isfinite(v));
}

TEST(Train, ShortRunReducesLossOnRepeatedScenes) {
  ToyModel m = ToyModel::init(ToyConfig{}, 0);
  const auto curve = lfdet::train(m, {.steps = 40, .scene_cycle = 2});
  EXPECT_LT(curve[38] + curve[39], curve[0] + curve[1]);
}

TEST(Train, DivergenceIsNumericError) {
  ToyModel m = ToyModel::init(ToyConfig{}, 0);
  EXPECT_THROW(lfdet::train(m, {.steps = 50, .lr = 1e6}), lfdet::NumericError);
}

TEST(End2EndSuite, GradientsMatchFiniteDifferences) {
  const lfdet::SuiteReport r = lfdet::end2end_suite();
  for (const auto& g : r.groups) EXPECT_LT(g.rel_error, r.tolerance) << g.name;
  EXPECT_TRUE(r.passed());
}

}  // namespace
