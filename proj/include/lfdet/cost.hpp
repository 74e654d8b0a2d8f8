#pragma once

// Exact parameter / multiply-accumulate accounting. FLOPs are always 2 * MACs.
// Softmax, scaling, activations and elementwise additions are not counted.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lfdet/layer_graph.hpp"

namespace lfdet {

inline constexpr const char* kCostConvention = "flops=2*macs";

struct LayerCost {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t flops = 0;

  LayerCost& operator+=(const LayerCost& o) {
    params += o.params;
    macs += o.macs;
    flops += o.flops;
    return *this;
  }
  friend LayerCost operator+(LayerCost a, const LayerCost& b) { return a += b; }
  bool operator==(const LayerCost&) const = default;
};

/// Cost of a dense matrix product [m,k] x [k,n], no parameters.
LayerCost matmul_cost(std::uint64_t m, std::uint64_t k, std::uint64_t n);

LayerCost conv_cost(std::size_t kernel, std::size_t cin, std::size_t cout, std::size_t groups,
                    std::size_t hout, std::size_t wout, bool bias);

struct CostEntry {
  std::string name;
  LayerCost cost;

  bool operator==(const CostEntry&) const = default;
};

struct CostReport {
  std::string name;
  std::vector<CostEntry> layers;
  LayerCost total;
  /// Present when the report was compared against a baseline.
  std::optional<LayerCost> baseline;

  std::int64_t delta_params() const;
  std::int64_t delta_flops() const;
  bool operator==(const CostReport&) const = default;
};

CostReport graph_cost(const LayerGraph& graph, std::string name = {});

struct HeadSpec;

struct HeadComparison {
  CostReport baseline;
  CostReport decoupled;
  CostReport efficient;
  /// delta_flops(efficient) / delta_flops(decoupled); 0 when the decoupled delta is 0.
  double flops_delta_ratio = 0.0;
  double params_delta_ratio = 0.0;
};

/// Costs both head variants against a coupled head (one 1x1 conv per level
/// to n_anchors * (5 + n_classes) channels, taken from `decoupled`).
HeadComparison compare_heads(const std::vector<LevelSpec>& levels, const HeadSpec& decoupled,
                             const HeadSpec& efficient);

}  // namespace lfdet
