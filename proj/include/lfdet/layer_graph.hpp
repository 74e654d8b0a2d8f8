#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lfdet {

/// One feature level entering a head: channels, stride (pixels per cell), extents.
struct LevelSpec {
  std::size_t in_channels = 0;
  std::size_t stride = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool operator==(const LevelSpec&) const = default;
};

/// Positive extents and a common image size (stride * extent) across levels.
void validate_levels(const std::vector<LevelSpec>& levels);

enum class LayerRole {
  Stem,
  ClsConv,
  RegConv,
  ClsPred,
  RegPred,
  ObjPred,
  Coupled,
  Projection,
  Mixing,
  Depthwise,
};

std::string_view role_name(LayerRole role);

/// A stride-1, same-padded convolution in a declarative graph.
struct LayerDesc {
  std::string name;
  std::size_t level = 0;
  LayerRole role = LayerRole::Stem;
  std::size_t kernel = 1;
  std::size_t cin = 0;
  std::size_t cout = 0;
  std::size_t groups = 1;
  bool bias = true;
  /// SiLU after the convolution.
  bool activation = false;
  std::size_t hout = 0;
  std::size_t wout = 0;
  /// Index of the producing layer; -1 means the level's input feature map.
  int source = -1;

  bool operator==(const LayerDesc&) const = default;
};

struct LayerGraph {
  std::vector<LevelSpec> levels;
  std::vector<LayerDesc> layers;

  /// Symbolic shape propagation: every layer's input channels and extents must
  /// equal those of its source. Throws ConfigError naming the first bad layer.
  void validate() const;

  /// Layers of `level` with the given role, in graph order.
  std::vector<std::size_t> find(std::size_t level, LayerRole role) const;

  /// Appends another graph's levels and layers, re-indexing levels and sources.
  void append(const LayerGraph& other);
};

}  // namespace lfdet
