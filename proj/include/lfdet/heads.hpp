#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "lfdet/autograd.hpp"
#include "lfdet/box.hpp"
#include "lfdet/layer_graph.hpp"
#include "lfdet/random.hpp"

namespace lfdet {

enum class HeadVariant { Decoupled, Efficient };

struct HeadSpec {
  HeadVariant variant = HeadVariant::Decoupled;
  std::size_t hidden_channels = 256;
  std::size_t convs_per_branch = 2;
  std::size_t n_anchors = 3;
  std::size_t n_classes = 80;

  /// 256-wide stem, two 3x3 convs per branch.
  static HeadSpec decoupled(std::size_t n_anchors = 3, std::size_t n_classes = 80) {
    return {HeadVariant::Decoupled, 256, 2, n_anchors, n_classes};
  }
  /// Half the stem width, one 3x3 conv fewer per branch.
  static HeadSpec efficient(std::size_t n_anchors = 3, std::size_t n_classes = 80) {
    return {HeadVariant::Efficient, 128, 1, n_anchors, n_classes};
  }
  bool operator==(const HeadSpec&) const = default;
};

/// Per level: 1x1 stem (in -> hidden), a cls branch and a reg branch of
/// convs_per_branch 3x3 convs, and 1x1 predictions: cls (n_anchors * n_classes)
/// from the cls branch, reg (n_anchors * 4) and obj (n_anchors) from the reg branch.
LayerGraph build_decoupled_head(const std::vector<LevelSpec>& levels, const HeadSpec& spec);
LayerGraph build_efficient_head(const std::vector<LevelSpec>& levels, const HeadSpec& spec);
/// Dispatches on spec.variant.
LayerGraph build_head(const std::vector<LevelSpec>& levels, const HeadSpec& spec);
/// One 1x1 conv per level to n_anchors * (5 + n_classes) outputs.
LayerGraph build_coupled_head(const std::vector<LevelSpec>& levels, std::size_t n_anchors,
                              std::size_t n_classes);

/// Weights and biases aligned with LayerGraph::layers. Biases are empty
/// tensors for layers without bias.
struct HeadParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  /// Uniform weights, bound sqrt(6/fan_in) before a SiLU and 1/sqrt(fan_in)
  /// otherwise; zero biases.
  static HeadParams init(const LayerGraph& graph, Rng& rng);
  static HeadParams zeros(const LayerGraph& graph);
};

struct HeadVars {
  std::vector<ad::Var> weights;
  std::vector<std::optional<ad::Var>> biases;

  static HeadVars record(ad::Tape& tape, const HeadParams& params);
};

/// Per level raw predictions [n_anchors * (5 + n_classes), H, W], channel
/// layout anchor-major with fields [box(4), obj(1), classes(n)].
std::vector<ad::Var> head_forward(const LayerGraph& graph, const std::vector<ad::Var>& features,
                                  const HeadVars& params);
std::vector<Tensor> head_forward(const LayerGraph& graph, const std::vector<Tensor>& features,
                                 const HeadParams& params);

struct AnchorSize {
  double w = 0.0;
  double h = 0.0;

  bool operator==(const AnchorSize&) const = default;
};

/// Decodes raw head output of one level: center = (2 sigmoid(t) - 0.5 + cell) * stride,
/// size = (2 sigmoid(t))^2 * anchor, probabilities = sigmoid.
PredictionMap decode_predictions(const Tensor& raw, const std::vector<AnchorSize>& anchors,
                                 std::size_t stride, std::size_t level = 0);

double sigmoid(double x);
double logit(double p);

}  // namespace lfdet
