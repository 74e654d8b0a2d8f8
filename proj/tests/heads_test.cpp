#include <cmath>

#include <gtest/gtest.h>

#include "lfdet/errors.hpp"
#include "lfdet/gradcheck.hpp"
#include "lfdet/heads.hpp"
#include "lfdet/kernels.hpp"
#include "lfdet/random.hpp"

namespace {

using lfdet::HeadSpec;
using lfdet::LayerRole;
using lfdet::LevelSpec;
using lfdet::Tensor;

struct Expect {
  LayerRole role;
  std::size_t kernel, cin, cout;
};

void expect_layers(const lfdet::LayerGraph& g, const std::vector<Expect>& want) {
  ASSERT_EQ(g.layers.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(g.layers[i].role, want[i].role) << i;
    EXPECT_EQ(g.layers[i].kernel, want[i].kernel) << i;
    EXPECT_EQ(g.layers[i].cin, want[i].cin) << i;
    EXPECT_EQ(g.layers[i].cout, want[i].cout) << i;
  }
}

TEST(BuildHead, DecoupledSingleLevel) {
  const auto g = lfdet::build_decoupled_head({{256, 8, 80, 80}}, HeadSpec::decoupled());
  expect_layers(g, {{LayerRole::Stem, 1, 256, 256},
                    {LayerRole::ClsConv, 3, 256, 256},
                    {LayerRole::ClsConv, 3, 256, 256},
                    {LayerRole::RegConv, 3, 256, 256},
                    {LayerRole::RegConv, 3, 256, 256},
                    {LayerRole::ClsPred, 1, 256, 240},
                    {LayerRole::RegPred, 1, 256, 12},
                    {LayerRole::ObjPred, 1, 256, 3}});
  const auto obj = g.layers[g.find(0, LayerRole::ObjPred)[0]];
  EXPECT_EQ(g.layers[static_cast<std::size_t>(obj.source)].role, LayerRole::RegConv);
}

TEST(BuildHead, EfficientSingleLevel) {
  const auto g = lfdet::build_efficient_head({{256, 8, 80, 80}}, HeadSpec::efficient());
  expect_layers(g, {{LayerRole::Stem, 1, 256, 128},
                    {LayerRole::ClsConv, 3, 128, 128},
                    {LayerRole::RegConv, 3, 128, 128},
                    {LayerRole::ClsPred, 1, 128, 240},
                    {LayerRole::RegPred, 1, 128, 12},
                    {LayerRole::ObjPred, 1, 128, 3}});
}

TEST(BuildHead, LayerCountsAndEmptyGraphs) {
  const std::vector<LevelSpec> lv{{256, 8, 80, 80}, {512, 16, 40, 40}, {1024, 32, 20, 20}};
  const auto dh = lfdet::build_head(lv, HeadSpec::decoupled());
  const auto edh = lfdet::build_head(lv, HeadSpec::efficient());
  EXPECT_EQ(dh.layers.size(), 3u * 8);
  EXPECT_EQ(edh.layers.size(), dh.layers.size() - 3 * 2);
  EXPECT_TRUE(lfdet::build_decoupled_head({}, HeadSpec::decoupled()).layers.empty());
  EXPECT_TRUE(lfdet::build_efficient_head({}, HeadSpec::efficient()).layers.empty());
}

TEST(BuildHead, Errors) {
  EXPECT_THROW(lfdet::build_decoupled_head({{8, 8, 4, 4}}, HeadSpec::efficient()), lfdet::ConfigError);
  EXPECT_THROW(lfdet::build_efficient_head({{8, 8, 4, 4}}, HeadSpec::decoupled()), lfdet::ConfigError);
  EXPECT_THROW(lfdet::build_head({{8, 8, 0, 4}}, HeadSpec::decoupled()), lfdet::ConfigError);
  EXPECT_THROW(lfdet::build_head({{8, 8, 4, 4}, {8, 16, 4, 4}}, HeadSpec::decoupled()),
               lfdet::ConfigError);
}

TEST(HeadForward, ZeroWeightsGiveZeroLogitsWithAnchorMajorLayout) {
  const std::vector<LevelSpec> lv{{4, 8, 4, 6}, {6, 16, 2, 3}};
  const auto g = lfdet::build_head(lv, HeadSpec::efficient(3, 80));
  lfdet::Rng rng(1);
  const auto out = lfdet::head_forward(
      g, {rng.uniform_tensor({4, 4, 6}, -1, 1), rng.uniform_tensor({6, 2, 3}, -1, 1)},
      lfdet::HeadParams::zeros(g));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], Tensor::zeros({255, 4, 6}));
  EXPECT_EQ(out[1], Tensor::zeros({255, 2, 3}));
  for (const auto& [key, p] : lfdet::decode_predictions(out[0], {{8, 8}, {16, 16}, {32, 32}}, 8)) {
    EXPECT_EQ(p.objectness, 0.5);
    for (double c : p.class_probs) EXPECT_EQ(c, 0.5);
  }
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

Tensor conv_act(const Tensor& x, const Tensor& w, const Tensor& b, bool act) {
  Tensor y = lfdet::kernels::conv2d(x, w, &b, {1, w.dim(2) / 2, 1});
  if (act)
    for (double& v : y.data()) v = silu(v);
  return y;
}

TEST(HeadForward, ChannelLayoutIsBoxObjClassesPerAnchor) {
  const std::size_t na = 2, nc = 3;
  const auto g = lfdet::build_head({{5, 4, 3, 4}}, {lfdet::HeadVariant::Efficient, 6, 1, na, nc});
  lfdet::Rng rng(2);
  const lfdet::HeadParams p = lfdet::HeadParams::init(g, rng);
  lfdet::HeadParams q = p;
  for (Tensor& b : q.biases) b = rng.uniform_tensor(b.shape(), -0.5, 0.5);
  const Tensor x = rng.uniform_tensor({5, 3, 4}, -1, 1);
  const Tensor out = lfdet::head_forward(g, {x}, q)[0];

  const Tensor stem = conv_act(x, q.weights[0], q.biases[0], true);
  const Tensor cls = conv_act(stem, q.weights[1], q.biases[1], true);
  const Tensor reg = conv_act(stem, q.weights[2], q.biases[2], true);
  const Tensor cls_p = conv_act(cls, q.weights[3], q.biases[3], false);
  const Tensor reg_p = conv_act(reg, q.weights[4], q.biases[4], false);
  const Tensor obj_p = conv_act(reg, q.weights[5], q.biases[5], false);
  ASSERT_EQ(out.shape(), (lfdet::Shape{na * (5 + nc), 3, 4}));
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        const std::size_t base = a * (5 + nc);
        for (std::size_t f = 0; f < 4; ++f)
          EXPECT_NEAR(out.at(base + f, r, c), reg_p.at(a * 4 + f, r, c), 1e-12);
        EXPECT_NEAR(out.at(base + 4, r, c), obj_p.at(a, r, c), 1e-12);
        for (std::size_t k = 0; k < nc; ++k)
          EXPECT_NEAR(out.at(base + 5 + k, r, c), cls_p.at(a * nc + k, r, c), 1e-12);
      }
}

TEST(HeadForward, FeatureShapeMismatch) {
  const auto g = lfdet::build_head({{5, 4, 3, 4}}, HeadSpec::efficient(1, 2));
  EXPECT_THROW(lfdet::head_forward(g, {Tensor({5, 4, 3})}, lfdet::HeadParams::zeros(g)),
               lfdet::DimensionError);
  EXPECT_THROW(lfdet::head_forward(g, {}, lfdet::HeadParams::zeros(g)), lfdet::DimensionError);
}

TEST(HeadForward, GradientsMatchFiniteDifferences) {
  const auto g = lfdet::build_head({{3, 4, 4, 4}}, {lfdet::HeadVariant::Decoupled, 4, 2, 1, 2});
  lfdet::Rng rng(3);
  lfdet::HeadParams p = lfdet::HeadParams::init(g, rng);
  const Tensor x = rng.uniform_tensor({3, 4, 4}, -1, 1);
  const Tensor r = rng.uniform_tensor({7, 4, 4}, -1, 1);
  auto value = [&] {
    const Tensor out = lfdet::head_forward(g, {x}, p)[0];
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
  };
  lfdet::ad::Tape tape;
  const lfdet::ad::Var xv = tape.leaf(x);
  const lfdet::HeadVars vars = lfdet::HeadVars::record(tape, p);
  const auto out = lfdet::head_forward(g, {xv}, vars)[0];
  const auto grads = tape.backward(out, r);
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    const Tensor num = lfdet::finite_diff_grad_inplace(value, p.weights[i], 1e-5);
    EXPECT_LT(lfdet::relative_error(grads.wrt(vars.weights[i]), num), 1e-6) << g.layers[i].name;
    const Tensor numb = lfdet::finite_diff_grad_inplace(value, p.biases[i], 1e-5);
    EXPECT_LT(lfdet::relative_error(grads.wrt(*vars.biases[i]), numb), 1e-6) << g.layers[i].name;
  }
}

TEST(Decode, ZeroLogitsAtOrigin) {
  const auto preds = lfdet::decode_predictions(Tensor::zeros({7, 2, 2}), {{10, 10}}, 8);
  const auto& p = preds.at({0, 0, 0, 0});
  EXPECT_EQ(p.box.cx(), 4.0);
  EXPECT_EQ(p.box.cy(), 4.0);
  EXPECT_EQ(p.box.w(), 10.0);
  EXPECT_EQ(p.box.h(), 10.0);
  EXPECT_EQ(preds.at({0, 0, 1, 1}).box.cx(), 12.0);
}

TEST(Decode, OffsetsAndSizesAreBounded) {
  lfdet::Rng rng(4);
  const Tensor raw = rng.uniform_tensor({2 * 7, 3, 3}, -8, 8);
  const std::vector<lfdet::AnchorSize> anchors{{10, 14}, {20, 6}};
  for (const auto& [k, p] : lfdet::decode_predictions(raw, anchors, 8, 1)) {
    EXPECT_EQ(k.level, 1u);
    const double ox = p.box.cx() - 8.0 * static_cast<double>(k.col);
    const double oy = p.box.cy() - 8.0 * static_cast<double>(k.row);
    EXPECT_GE(ox, -4.0);
    EXPECT_LE(ox, 12.0);
    EXPECT_GE(oy, -4.0);
    EXPECT_LE(oy, 12.0);
    EXPECT_LE(p.box.w(), 4 * anchors[k.anchor].w);
    EXPECT_LE(p.box.h(), 4 * anchors[k.anchor].h);
  }
  EXPECT_THROW(lfdet::decode_predictions(raw, {{1, 1}, {2, 2}, {3, 3}}, 8), lfdet::ConfigError);
}

}  // namespace
