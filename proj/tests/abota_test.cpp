#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "lfdet/abota.hpp"
#include "lfdet/errors.hpp"
#include "lfdet/random.hpp"
#include "oracles.hpp"

namespace {

using lfdet::AnchorLevel;
using lfdet::Box;
using lfdet::GroundTruth;
using lfdet::Prediction;

Box random_box(lfdet::Rng& rng) {
  return Box(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(0.1, 30), rng.uniform(0.1, 30));
}

TEST(Iou, Examples) {
  EXPECT_EQ(lfdet::iou(Box(1, 1, 2, 2), Box(1, 1, 2, 2)), 1.0);
  EXPECT_NEAR(lfdet::iou(Box(1, 1, 2, 2), Box(2, 2, 2, 2)), 1.0 / 7.0, 1e-15);
  EXPECT_EQ(lfdet::iou(Box(0, 0, 2, 2), Box(10, 0, 2, 2)), 0.0);
  EXPECT_EQ(lfdet::iou(Box(0, 0, 2, 2), Box(2, 0, 2, 2)), 0.0);
}

TEST(Ciou, WorkedPair) {
  EXPECT_NEAR(lfdet::ciou(Box(1, 1, 2, 2), Box(2, 2, 2, 2)), 2.0 / 63.0, 1e-12);
}

TEST(Ciou, SelfIsExactlyOne) {
  lfdet::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Box b = random_box(rng);
    EXPECT_EQ(lfdet::ciou(b, b), 1.0);
  }
}

TEST(Ciou, MatchesFormulaBoundedBySymmetric) {
  lfdet::Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double c = lfdet::ciou(a, b);
    EXPECT_NEAR(c, oracle::ciou(a, b), 1e-12);
    EXPECT_LE(c, lfdet::iou(a, b));
    EXPECT_NEAR(c, lfdet::ciou(b, a), 1e-12);
    EXPECT_LE(c, 1.0);
    EXPECT_GT(c, -1.5);
  }
}

TEST(Ciou, FarApartIsNegative) {
  EXPECT_LT(lfdet::ciou(Box(0, 0, 1, 1), Box(100, 100, 1, 3)), 0.0);
}

TEST(Ciou, AspectTermPenalizesShapeMismatch) {
  // Same centers and same IoU family: the mismatched aspect ratio scores lower.
  const double same = lfdet::ciou(Box(0, 0, 4, 4), Box(0, 0, 2, 2));
  const double mismatch = lfdet::ciou(Box(0, 0, 4, 4), Box(0, 0, 4, 1));
  EXPECT_DOUBLE_EQ(same, 0.25);
  EXPECT_LT(mismatch, 0.25);
}

TEST(Cost, Examples) {
  const Prediction half{Box(0, 0, 2, 2), {0.5, 0.5}, 0.5};
  const GroundTruth gt{Box(0, 0, 2, 2), 0};
  EXPECT_NEAR(lfdet::classification_cost(gt, half), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(lfdet::assignment_cost(gt, half, 3.0), 2 * std::log(2.0), 1e-15);
  const GroundTruth shifted{Box(1, 1, 2, 2), 1};
  const Prediction p{Box(2, 2, 2, 2), {0.2, 0.9}, 0.5};
  const double expected = -std::log(0.8) - std::log(0.9) + 3.0 * (1.0 - 2.0 / 63.0);
  EXPECT_NEAR(lfdet::assignment_cost(shifted, p, 3.0), expected, 1e-12);
  EXPECT_NEAR(lfdet::assignment_cost(shifted, p, 0.0), -std::log(0.8) - std::log(0.9), 1e-15);
}

TEST(Cost, ConfidentWrongClassIsFiniteAndLarge) {
  const Prediction p{Box(0, 0, 1, 1), {0.0, 1.0}, 0.5};
  const double c = lfdet::classification_cost({Box(0, 0, 1, 1), 0}, p);
  EXPECT_TRUE(std::isfinite(c));
  EXPECT_NEAR(c, 2 * -std::log(1e-16), 1e-9);
}

TEST(Cost, Errors) {
  const Prediction p{Box(0, 0, 1, 1), {0.5}, 0.5};
  EXPECT_THROW(lfdet::classification_cost({Box(0, 0, 1, 1), 1}, p), lfdet::InputError);
  EXPECT_THROW(lfdet::assignment_cost({Box(0, 0, 1, 1), 0}, p, -1.0), lfdet::InputError);
  const Prediction bad{Box(0, 0, 1, 1), {1.5}, 0.5};
  EXPECT_THROW(lfdet::classification_cost({Box(0, 0, 1, 1), 0}, bad), lfdet::InputError);
  EXPECT_THROW(Box(0, 0, 0, 1), lfdet::InputError);
  EXPECT_THROW(Box(0, 0, 1, -1), lfdet::InputError);
  EXPECT_THROW(Box(NAN, 0, 1, 1), lfdet::InputError);
}

TEST(ResolveTop2, ThreeGtExample) {
  const double ious[] = {0.8, 0.6, 0.3};
  const double costs[] = {1.1, 1.3, 0.1};
  const std::size_t idx[] = {0, 1, 2};
  const auto e = lfdet::resolve_top2(idx, [&](std::size_t i) { return ious[i]; },
                                     [&](std::size_t i) { return costs[i]; });
  EXPECT_EQ(e.gt_index, 0u);
  EXPECT_EQ(e.cost, 1.1);
  ASSERT_EQ(e.top2.size(), 2u);
  EXPECT_EQ(e.top2[0], (lfdet::TopEntry{0, 0.8, 1.1}));
  EXPECT_EQ(e.top2[1], (lfdet::TopEntry{1, 0.6, 1.3}));
}

TEST(ResolveTop2, CheaperSecondWins) {
  const double ious[] = {0.3, 0.8, 0.6};
  const double costs[] = {0.0, 2.0, 1.0};
  const std::size_t idx[] = {0, 1, 2};
  const auto e = lfdet::resolve_top2(idx, [&](std::size_t i) { return ious[i]; },
                                     [&](std::size_t i) { return costs[i]; });
  EXPECT_EQ(e.gt_index, 2u);
}

TEST(ResolveTop2, TiesGoToLowerIndex) {
  const std::size_t idx[] = {4, 2, 7};
  const auto e = lfdet::resolve_top2(idx, [](std::size_t) { return 0.5; },
                                     [](std::size_t) { return 1.0; });
  EXPECT_EQ(e.gt_index, 2u);
  ASSERT_EQ(e.top2.size(), 2u);
  EXPECT_EQ(e.top2[0].gt_index, 2u);
  EXPECT_EQ(e.top2[1].gt_index, 4u);
}

TEST(ResolveTop2, SingleAndEmpty) {
  const std::size_t one[] = {3};
  const auto e = lfdet::resolve_top2(one, [](std::size_t) { return -0.2; },
                                     [](std::size_t) { return 9.0; });
  EXPECT_EQ(e.gt_index, 3u);
  EXPECT_EQ(e.top2.size(), 1u);
  EXPECT_THROW(lfdet::resolve_top2({}, [](std::size_t) { return 0.0; },
                                   [](std::size_t) { return 0.0; }),
               lfdet::ContractError);
}

const std::vector<AnchorLevel> kLevel{{{4, 4, 8}, {{10, 10}}}};

TEST(MatchCandidates, CenterAndNearerNeighbors) {
  // Center (13, 11): cell (1, 1), fractions 0.625 and 0.375.
  const auto c = lfdet::match_candidates({{Box(13, 11, 10, 10), 0}}, kLevel);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].key, (lfdet::CellKey{0, 0, 0, 1}));
  EXPECT_EQ(c[1].key, (lfdet::CellKey{0, 0, 1, 1}));
  EXPECT_EQ(c[2].key, (lfdet::CellKey{0, 0, 1, 2}));
  for (const auto& m : c) EXPECT_FALSE(m.conflict());
}

TEST(MatchCandidates, HalfwayGoesToLowerNeighborAndEdgesAreDropped) {
  const auto c = lfdet::match_candidates({{Box(4, 4, 10, 10), 0}}, kLevel);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].key, (lfdet::CellKey{0, 0, 0, 0}));
}

TEST(MatchCandidates, IdenticalGtsConflictEverywhere) {
  const GroundTruth g{Box(13, 11, 10, 10), 0};
  const auto c = lfdet::match_candidates({g, g}, kLevel);
  ASSERT_EQ(c.size(), 3u);
  for (const auto& m : c) EXPECT_EQ(m.gt_indices, (std::vector<std::size_t>{0, 1}));
}

TEST(MatchCandidates, ShapeFilter) {
  EXPECT_TRUE(lfdet::match_candidates({{Box(13, 11, 40, 10), 0}}, kLevel).empty());
  EXPECT_TRUE(lfdet::match_candidates({{Box(13, 11, 2.5, 10), 0}}, kLevel).empty());
  EXPECT_EQ(lfdet::match_candidates({{Box(13, 11, 39.9, 10), 0}}, kLevel).size(), 3u);
  EXPECT_THROW(lfdet::match_candidates({{Box(13, 11, 10, 10), 0}}, kLevel, 1.0), lfdet::ConfigError);
}

TEST(MatchCandidates, CenterOutsideImage) {
  EXPECT_THROW(lfdet::match_candidates({{Box(32, 5, 4, 4), 0}}, kLevel), lfdet::InputError);
  EXPECT_THROW(lfdet::match_candidates({{Box(5, -0.1, 4, 4), 0}}, kLevel), lfdet::InputError);
  EXPECT_TRUE(lfdet::match_candidates({}, kLevel).empty());
}

TEST(AssignScene, MissingPredictionIsInputError) {
  EXPECT_THROW(lfdet::assign_scene({{Box(13, 11, 10, 10), 0}}, {}, kLevel), lfdet::InputError);
}

TEST(AssignScene, MatchesBruteForceOracle) {
  lfdet::Rng rng(7);
  std::size_t conflicts = 0;
  for (int t = 0; t < 1000; ++t) {
    const oracle::RandomScene s = oracle::random_scene(rng);
    const lfdet::AssignmentResult got = lfdet::assign_scene(s.gts, s.preds, s.levels, 3.0, 4.0);
    const lfdet::AssignmentResult want = oracle::assign(s.gts, s.preds, s.levels, 3.0, 4.0);
    ASSERT_EQ(oracle::diff(got, want), "") << "scene " << t;
    const auto exact = oracle::assign(s.gts, s.preds, s.levels, 3.0, 4.0, true);
    ASSERT_EQ(got, exact) << "scene " << t;
    for (const auto& e : got.entries) conflicts += e.top2.size() > 1;
  }
  EXPECT_GT(conflicts, 100u);
}

TEST(AssignScene, ChosenIndexIsInTop2AndCostRecomputes) {
  lfdet::Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const oracle::RandomScene s = oracle::random_scene(rng);
    for (const auto& e : lfdet::assign_scene(s.gts, s.preds, s.levels).entries) {
      const auto in_top = std::any_of(e.top2.begin(), e.top2.end(),
                                      [&](const lfdet::TopEntry& x) { return x.gt_index == e.gt_index; });
      EXPECT_TRUE(in_top);
      EXPECT_EQ(e.cost, lfdet::assignment_cost(s.gts[e.gt_index], s.preds.at(e.key)));
    }
  }
}

TEST(AssignScene, ScaleEquivariance) {
  lfdet::Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const oracle::RandomScene s = oracle::random_scene(rng);
    const auto base = lfdet::assign_scene(s.gts, s.preds, s.levels);
    for (const auto& e : base.entries) {
      const double factor = 2.0;
      std::vector<GroundTruth> gts;
      for (std::size_t i = 0; i < s.gts.size(); ++i)
        gts.push_back({s.gts[i].box.scaled(factor), s.gts[i].class_id});
      Prediction p = s.preds.at(e.key);
      p.box = p.box.scaled(factor);
      std::vector<std::size_t> idx;
      for (const auto& x : lfdet::match_candidates(s.gts, s.levels))
        if (x.key == e.key) idx = x.gt_indices;
      const auto scaled = lfdet::abota_resolve({e.key, idx}, gts, p);
      EXPECT_EQ(scaled.gt_index, e.gt_index);
    }
  }
}

TEST(AssignScene, GtPermutationMovesIndicesOnly) {
  lfdet::Rng rng(10);
  for (int t = 0; t < 200; ++t) {
    const oracle::RandomScene s = oracle::random_scene(rng, 3, false);
    std::vector<std::size_t> perm(s.gts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::vector<GroundTruth> permuted;
    for (std::size_t i : perm) permuted.push_back(s.gts[i]);
    const auto a = lfdet::assign_scene(s.gts, s.preds, s.levels);
    const auto b = lfdet::assign_scene(permuted, s.preds, s.levels);
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      EXPECT_EQ(a.entries[i].key, b.entries[i].key);
      EXPECT_EQ(a.entries[i].gt_index, perm[b.entries[i].gt_index]);
      EXPECT_EQ(a.entries[i].cost, b.entries[i].cost);
    }
  }
}

}  // namespace
