#pragma once

// Desk-scale detector: three stride-2 3x3 convs, one LFSa layer per head
// level, a decoupled head, label assignment on every step, and plain
// gradient descent on synthetic scenes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lfdet/abota.hpp"
#include "lfdet/autograd.hpp"
#include "lfdet/heads.hpp"
#include "lfdet/lfsa.hpp"
#include "lfdet/scene.hpp"

namespace lfdet {

struct LossWeights {
  double obj = 1.0;
  double cls = 0.5;
  double reg = 0.05;

  bool operator==(const LossWeights&) const = default;
};

struct ToyConfig {
  SceneOptions scene;
  std::vector<std::size_t> backbone_channels{8, 16, 32};
  /// 1: stride-8 level only. 2: stride-4 and stride-8 levels.
  std::size_t n_levels = 1;
  bool use_lfsa = true;
  HeadSpec head{HeadVariant::Efficient, 32, 1, 2, 2};
  /// Anchors per level, in pixels; each level needs head.n_anchors entries.
  std::vector<std::vector<AnchorSize>> anchors{{{12, 12}, {24, 24}}};
  LossWeights weights;
  double lambda = kDefaultLambda;
  double anchor_t = kDefaultAnchorT;

  /// Default two-level variant (strides 4 and 8).
  static ToyConfig two_level();
  /// 16x16 image, one level, one anchor, tiny widths; used for gradient checks.
  static ToyConfig miniature();

  /// Throws ConfigError describing the first inconsistency.
  void validate() const;
  std::vector<LevelSpec> level_specs() const;
  std::vector<AnchorLevel> anchor_levels() const;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ToyModel {
  ToyConfig config;
  std::vector<Tensor> backbone_w;  // [Cout,Cin,3,3]
  std::vector<Tensor> backbone_b;
  std::vector<LfsaParams> lfsa;    // one per level when enabled
  LayerGraph head_graph;
  HeadParams head;

  static ToyModel init(const ToyConfig& config, std::uint64_t seed);

  /// Every trainable tensor, in a fixed order.
  std::vector<NamedTensor> parameters();
  std::size_t parameter_count() const;
};

/// Raw head output per level, recorded on `image`'s tape. `params` must be
/// leaf variables aligned with ToyModel::parameters().
std::vector<ad::Var> toy_forward(const ToyModel& model, ad::Var image,
                                 const std::vector<ad::Var>& params);

struct LossTerms {
  ad::Var total;  // valid only while its tape is alive
  /// Weighted components; total = obj + cls + reg.
  double obj = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  std::size_t positives = 0;
};

/// Objectness BCE averaged over every (level, anchor, cell), class BCE averaged
/// over positives and classes, mean (1 - CIoU) over positives.
LossTerms detection_loss(const std::vector<ad::Var>& raw, const std::vector<AnchorLevel>& levels,
                         const AssignmentResult& assignment, const std::vector<GroundTruth>& gts,
                         const LossWeights& weights);

struct StepResult {
  double loss = 0.0;
  LossTerms terms;
  AssignmentResult assignment;
  std::vector<Tensor> grads;  // aligned with parameters(); empty unless requested
};

/// Forward, assignment (unless `fixed` is given) and loss for one scene.
StepResult evaluate(ToyModel& model, const Scene& scene,
                    const std::optional<AssignmentResult>& fixed = std::nullopt,
                    bool want_grads = false);

struct TrainOptions {
  std::size_t steps = 500;
  double lr = 0.1;
  std::uint64_t seed = 0;
  /// 0: a fresh scene every step. n > 0: cycle through the first n scenes of the stream.
  std::size_t scene_cycle = 0;
};

/// Scene for stream position `step`: object count in [1, 4] and layout both
/// derived from (seed, step).
Scene stream_scene(std::uint64_t seed, std::size_t step, const SceneOptions& opt);

/// Plain gradient descent; returns the loss of every step (before its update).
/// Throws NumericError naming the step when the loss becomes non-finite.
std::vector<double> train(ToyModel& model, const TrainOptions& opt);

}  // namespace lfdet
