#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "lfdet/cost.hpp"
#include "lfdet/errors.hpp"
#include "lfdet/kernels.hpp"
#include "lfdet/lfsa.hpp"
#include "lfdet/random.hpp"
#include "lfdet/suites.hpp"
#include "oracles.hpp"

namespace {

using lfdet::LfsaParams;
using lfdet::Rng;
using lfdet::Tensor;

TEST(RowAttention, SingleRowReturnsValues) {
  Rng rng(1);
  const Tensor q = rng.uniform_tensor({1, 5}, -1, 1), k = rng.uniform_tensor({1, 5}, -1, 1),
               v = rng.uniform_tensor({1, 5}, -1, 1);
  EXPECT_EQ(lfdet::row_attention(q, k, v), v);
}

TEST(RowAttention, ZeroQueryAveragesRows) {
  Rng rng(2);
  const Tensor k = rng.uniform_tensor({4, 3}, -1, 1), v = rng.uniform_tensor({4, 3}, -1, 1);
  const Tensor out = lfdet::row_attention(Tensor::zeros({4, 3}), k, v);
  for (std::size_t t = 0; t < 3; ++t) {
    double mean = 0;
    for (std::size_t j = 0; j < 4; ++j) mean += v.at(j, t) / 4;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.at(i, t), mean, 1e-15);
  }
}

TEST(RowAttention, MatchesLoopOracle) {
  Rng rng(3);
  const Tensor q = rng.uniform_tensor({4, 5}, -1, 1), k = rng.uniform_tensor({4, 5}, -1, 1),
               v = rng.uniform_tensor({4, 5}, -1, 1);
  EXPECT_LT(lfdet::max_abs_diff(lfdet::row_attention(q, k, v), oracle::row_attention(q, k, v)), 1e-12);
}

TEST(RowAttention, ShapeMismatch) {
  EXPECT_THROW(lfdet::row_attention(Tensor({2, 3}), Tensor({3, 2}), Tensor({2, 3})),
               lfdet::DimensionError);
}

TEST(ColAttention, SingleColumnReturnsValues) {
  Rng rng(4);
  const Tensor q = rng.uniform_tensor({5, 1}, -1, 1), k = rng.uniform_tensor({5, 1}, -1, 1),
               v = rng.uniform_tensor({5, 1}, -1, 1);
  EXPECT_EQ(lfdet::col_attention(q, k, v), v);
}

TEST(ColAttention, IsTransposedRowAttention) {
  Rng rng(5);
  const Tensor q = rng.uniform_tensor({3, 6}, -1, 1), k = rng.uniform_tensor({3, 6}, -1, 1),
               v = rng.uniform_tensor({3, 6}, -1, 1);
  namespace kr = lfdet::kernels;
  const Tensor via_rows = kr::transpose(
      lfdet::row_attention(kr::transpose(q), kr::transpose(k), kr::transpose(v)));
  EXPECT_TRUE(lfdet::bitwise_equal(lfdet::col_attention(q, k, v), via_rows));
  EXPECT_LT(lfdet::max_abs_diff(lfdet::col_attention(q, k, v), oracle::col_attention(q, k, v)), 1e-12);
}

TEST(RowAttention, KeyShiftInvariance) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const Tensor q = rng.uniform_tensor({6, 7}, -1, 1), k = rng.uniform_tensor({6, 7}, -1, 1),
                 v = rng.uniform_tensor({6, 7}, -1, 1);
    const Tensor base = lfdet::row_attention(q, k, v);
    for (double c : {-5.0, 1.0, 1e3}) {
      Tensor ks = k;
      for (double& e : ks.data()) e += c;
      EXPECT_LT(lfdet::max_abs_diff(lfdet::row_attention(q, ks, v), base), 1e-9) << c;
    }
  }
}

TEST(RowAttention, ValueLinearity) {
  Rng rng(7);
  const Tensor q = rng.uniform_tensor({5, 4}, -1, 1), k = rng.uniform_tensor({5, 4}, -1, 1),
               v = rng.uniform_tensor({5, 4}, -1, 1);
  const double alpha = -2.75;
  Tensor av = v;
  for (double& e : av.data()) e *= alpha;
  Tensor expect = lfdet::row_attention(q, k, v);
  for (double& e : expect.data()) e *= alpha;
  EXPECT_LT(lfdet::max_abs_diff(lfdet::row_attention(q, k, av), expect), 1e-12);
}

TEST(LfsaParams, InitIsIdentityAndValidates) {
  Rng rng(8);
  LfsaParams p = LfsaParams::init(3, rng);
  EXPECT_EQ(p.w_row, Tensor::zeros({3, 3, 1, 1}));
  EXPECT_EQ(p.dw_col.at(2, 0, 3, 3), 1.0);
  EXPECT_EQ(p.dw_col.sum(), 3.0);
  const double bound = 1.0 / std::sqrt(3.0);
  for (double w : p.wq.data()) EXPECT_LE(std::abs(w), bound);
  p.wk = Tensor::zeros({2, 3, 1, 1});
  EXPECT_THROW(p.validate(), lfdet::DimensionError);
}

TEST(LfsaForward, ResidualIdentityIsBitwise) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    LfsaParams p = LfsaParams::random(4, rng);
    p.w_row = Tensor::zeros(p.w_row.shape());
    p.w_col = Tensor::zeros(p.w_col.shape());
    p.b_row = Tensor::zeros(p.b_row.shape());
    p.b_col = Tensor::zeros(p.b_col.shape());
    p.db_row = Tensor::zeros(p.db_row.shape());
    p.db_col = Tensor::zeros(p.db_col.shape());
    const Tensor x = rng.uniform_tensor({4, 6, 5}, -3, 3);
    EXPECT_TRUE(lfdet::bitwise_equal(lfdet::lfsa_forward(x, p), x));
    EXPECT_TRUE(lfdet::bitwise_equal(lfdet::lfsa_oracle(x, p), x));
  }
}

TEST(LfsaForward, ScalarAllOnesTriples) {
  Rng rng(10);
  LfsaParams p = LfsaParams::init(1, rng);
  for (auto& g : p.groups())
    if (g.name[0] == 'w' || (g.name[0] == 'd' && g.name[1] == 'w')) *g.tensor = Tensor::ones(g.tensor->shape());
  const Tensor x = Tensor({1, 1, 1}, std::vector<double>{0.7});
  EXPECT_DOUBLE_EQ(lfdet::lfsa_forward(x, p)[0], 2.1);
  EXPECT_DOUBLE_EQ(lfdet::lfsa_oracle(x, p)[0], 2.1);
}

TEST(LfsaForward, MatchesOracleAndPreservesShape) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const LfsaParams p = LfsaParams::random(c, rng);
    const Tensor x = rng.uniform_tensor({c, h, w}, -1, 1);
    const Tensor y = lfdet::lfsa_forward(x, p);
    ASSERT_EQ(y.shape(), x.shape());
    EXPECT_LT(lfdet::max_abs_diff(y, lfdet::lfsa_oracle(x, p)), 1e-9);
  }
}

TEST(LfsaForward, TapeAndPlainAgreeBitwise) {
  Rng rng(12);
  const LfsaParams p = LfsaParams::random(3, rng);
  const Tensor x = rng.uniform_tensor({3, 5, 4}, -1, 1);
  lfdet::ad::Tape tape;
  const auto vars = lfdet::LfsaVars::record(tape, p);
  EXPECT_TRUE(lfdet::bitwise_equal(lfdet::lfsa_forward(tape.leaf(x), vars).value(),
                                   lfdet::lfsa_forward(x, p)));
}

TEST(LfsaForward, MatchesTestSideLoops) {
  Rng rng(14);
  for (int t = 0; t < 10; ++t) {
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const LfsaParams p = LfsaParams::random(c, rng);
    const Tensor x = rng.uniform_tensor({c, h, w}, -1, 1);
    EXPECT_LT(lfdet::max_abs_diff(lfdet::lfsa_forward(x, p), oracle::lfsa_layer(x, p)), 1e-9);
  }
}

TEST(LfsaForward, ChannelMismatch) {
  Rng rng(13);
  const LfsaParams p = LfsaParams::random(3, rng);
  EXPECT_THROW(lfdet::lfsa_forward(Tensor({2, 4, 4}), p), lfdet::DimensionError);
}

TEST(AttentionStage, ChannelPermutationEquivariance) {
  Rng rng(14);
  const std::size_t c = 4, h = 5, w = 6;
  const Tensor q = rng.uniform_tensor({c, h, w}, -1, 1), k = rng.uniform_tensor({c, h, w}, -1, 1),
               v = rng.uniform_tensor({c, h, w}, -1, 1);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  auto permute = [&](const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, y, x) = t.at(perm[i], y, x);
    return out;
  };
  namespace kr = lfdet::kernels;
  EXPECT_TRUE(lfdet::bitwise_equal(kr::row_attention(permute(q), permute(k), permute(v)).out,
                                   permute(kr::row_attention(q, k, v).out)));
  EXPECT_TRUE(lfdet::bitwise_equal(kr::col_attention(permute(q), permute(k), permute(v)),
                                   permute(kr::col_attention(q, k, v))));
}

TEST(LfsaCost, ClosedFormExamples) {
  EXPECT_EQ(lfdet::lfsa_cost(2, 2, 3).params, 224u);
  EXPECT_EQ(lfdet::lfsa_cost(2, 2, 3).macs, 1416u);
  EXPECT_EQ(lfdet::lfsa_cost(1, 1, 1).params, 107u);
  EXPECT_EQ(lfdet::lfsa_cost(1, 1, 1).macs, 107u);
  EXPECT_EQ(lfdet::lfsa_cost(2, 2, 3).flops, 2832u);
  EXPECT_EQ(lfdet::lfsa_attention_macs(256, 80, 80), 2ull * 256 * (80 * 80 * 80 * 2));
}

TEST(LfsaCost, TermByTermAgainstClosedForm) {
  for (std::size_t c : {1u, 3u, 8u})
    for (std::size_t h : {1u, 4u, 7u})
      for (std::size_t w : {1u, 5u, 9u}) {
        const std::uint64_t params = 3 * c * c + 2 * (c * c + c) + 2 * (49 * c + c);
        const std::uint64_t macs = 3 * c * c * h * w + 2 * c * (h * h * w + w * w * h) +
                                   2 * c * c * h * w + 98 * c * h * w;
        const lfdet::LayerCost got = lfdet::lfsa_cost(c, h, w);
        EXPECT_EQ(got.params, params);
        EXPECT_EQ(got.macs, macs);
        EXPECT_EQ(got.flops, 2 * macs);
        const lfdet::LayerCost conv = lfdet::graph_cost(lfdet::lfsa_conv_graph(c, h, w)).total;
        EXPECT_EQ(conv.macs + lfdet::lfsa_attention_macs(c, h, w), got.macs);
        EXPECT_EQ(conv.params, got.params);
      }
}

TEST(LfsaCost, AttentionRatioAgainstFullTokenAttention) {
  // 2C(H^2 W + W^2 H) / (2 (HW)^2 C) reduces to (H + W) / (HW).
  const double r = static_cast<double>(lfdet::lfsa_attention_macs(256, 80, 80)) /
                   static_cast<double>(lfdet::full_attention_macs(256, 80, 80));
  EXPECT_DOUBLE_EQ(r, 160.0 / 6400.0);
  EXPECT_LE(r, 0.05);
  EXPECT_EQ(lfdet::full_attention_macs(3, 4, 5), 2ull * 20 * 20 * 3);
  EXPECT_EQ(lfdet::lfsa_attention_macs(1, 1, 1), 2 * lfdet::full_attention_macs(1, 1, 1));
}

TEST(LfsaSuite, GradientsWithinTolerance) {
  const lfdet::SuiteReport r = lfdet::lfsa_suite();
  EXPECT_EQ(r.groups.size(), 12u);
  for (const auto& g : r.groups) EXPECT_LT(g.rel_error, 1e-6) << g.name;
}

}  // namespace
