#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lfdet/box.hpp"
#include "lfdet/tensor.hpp"

namespace lfdet {

inline constexpr std::size_t kMaxSceneObjects = 4;

struct SceneOptions {
  std::size_t size = 64;
  std::size_t channels = 1;
  std::size_t min_extent = 8;
  std::size_t max_extent = 32;
  double noise = 0.05;
};

/// Synthetic image with axis-aligned rectangles. Class 0 is a solid fill,
/// class 1 horizontal stripes two pixels wide.
struct Scene {
  Tensor image;  // [channels, size, size]
  std::vector<GroundTruth> gts;

  bool operator==(const Scene&) const = default;
};

/// Deterministic for a fixed seed. Throws ContractError for more than four objects
/// or extents that do not fit the image.
Scene gen_scene(std::uint64_t seed, std::size_t n_objects, const SceneOptions& opt = {});

}  // namespace lfdet
