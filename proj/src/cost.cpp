#include "lfdet/cost.hpp"

#include "lfdet/errors.hpp"
#include "lfdet/heads.hpp"

namespace lfdet {

LayerCost matmul_cost(std::uint64_t m, std::uint64_t k, std::uint64_t n) {
  const std::uint64_t macs = m * k * n;
  return {0, macs, 2 * macs};
}

LayerCost conv_cost(std::size_t kernel, std::size_t cin, std::size_t cout, std::size_t groups,
                    std::size_t hout, std::size_t wout, bool bias) {
  if (groups == 0 || cin % groups != 0 || cout % groups != 0)
    throw ConfigError("conv_cost: channels " + std::to_string(cin) + "->" +
                      std::to_string(cout) + " not divisible by groups " +
                      std::to_string(groups));
  const std::uint64_t k2 = std::uint64_t{kernel} * kernel;
  LayerCost c;
  c.params = k2 * (cin / groups) * cout + (bias ? cout : 0);
  c.macs = k2 * (cin / groups) * cout * hout * wout;
  c.flops = 2 * c.macs;
  return c;
}

std::int64_t CostReport::delta_params() const {
  if (!baseline) return 0;
  return static_cast<std::int64_t>(total.params) - static_cast<std::int64_t>(baseline->params);
}

std::int64_t CostReport::delta_flops() const {
  if (!baseline) return 0;
  return static_cast<std::int64_t>(total.flops) - static_cast<std::int64_t>(baseline->flops);
}

CostReport graph_cost(const LayerGraph& graph, std::string name) {
  graph.validate();
  CostReport r;
  r.name = std::move(name);
  for (const LayerDesc& l : graph.layers) {
    LayerCost c = conv_cost(l.kernel, l.cin, l.cout, l.groups, l.hout, l.wout, l.bias);
    r.layers.push_back({l.name, c});
    r.total += c;
  }
  return r;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

HeadComparison compare_heads(const std::vector<LevelSpec>& levels, const HeadSpec& decoupled,
                             const HeadSpec& efficient) {
  HeadComparison cmp;
  cmp.baseline =
      graph_cost(build_coupled_head(levels, decoupled.n_anchors, decoupled.n_classes), "coupled");
  cmp.decoupled = graph_cost(build_head(levels, decoupled), "decoupled");
  cmp.efficient = graph_cost(build_head(levels, efficient), "efficient");
  cmp.decoupled.baseline = cmp.baseline.total;
  cmp.efficient.baseline = cmp.baseline.total;
  cmp.baseline.baseline = cmp.baseline.total;
  cmp.flops_delta_ratio = ratio(cmp.efficient.delta_flops(), cmp.decoupled.delta_flops());
  cmp.params_delta_ratio = ratio(cmp.efficient.delta_params(), cmp.decoupled.delta_params());
  return cmp;
}

}  // namespace lfdet
