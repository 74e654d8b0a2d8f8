#include "lfdet/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lfdet/errors.hpp"

namespace lfdet {

namespace {

void check_spec(const HeadSpec& spec) {
  if (!spec.hidden_channels || !spec.n_anchors || !spec.n_classes)
    throw ConfigError("head spec: hidden_channels, n_anchors and n_classes must be positive");
}

LayerGraph build(const std::vector<LevelSpec>& levels, const HeadSpec& spec) {
  validate_levels(levels);
  check_spec(spec);
  LayerGraph g;
  g.levels = levels;
  const std::size_t hid = spec.hidden_channels;
  const std::size_t a = spec.n_anchors;
  for (std::size_t lv = 0; lv < levels.size(); ++lv) {
    const LevelSpec& L = levels[lv];
    const std::string prefix = "L" + std::to_string(lv) + ".";
    auto add = [&](std::string name, LayerRole role, std::size_t k, std::size_t cin,
                   std::size_t cout, bool act, int source) {
      g.layers.push_back({prefix + name, lv, role, k, cin, cout, 1, true, act, L.height, L.width,
                          source});
      return static_cast<int>(g.layers.size() - 1);
    };
    const int stem = add("stem", LayerRole::Stem, 1, L.in_channels, hid, true, -1);
    int cls = stem;
    for (std::size_t i = 0; i < spec.convs_per_branch; ++i)
      cls = add("cls." + std::to_string(i), LayerRole::ClsConv, 3, hid, hid, true, cls);
    int reg = stem;
    for (std::size_t i = 0; i < spec.convs_per_branch; ++i)
      reg = add("reg." + std::to_string(i), LayerRole::RegConv, 3, hid, hid, true, reg);
    add("cls_pred", LayerRole::ClsPred, 1, hid, a * spec.n_classes, false, cls);
    add("reg_pred", LayerRole::RegPred, 1, hid, a * 4, false, reg);
    add("obj_pred", LayerRole::ObjPred, 1, hid, a, false, reg);
  }
  g.validate();
  return g;
}

}  // namespace

LayerGraph build_decoupled_head(const std::vector<LevelSpec>& levels, const HeadSpec& spec) {
  if (spec.variant != HeadVariant::Decoupled)
    throw ConfigError("build_decoupled_head requires the decoupled variant");
  return build(levels, spec);
}

LayerGraph build_efficient_head(const std::vector<LevelSpec>& levels, const HeadSpec& spec) {
  if (spec.variant != HeadVariant::Efficient)
    throw ConfigError("build_efficient_head requires the efficient variant");
  return build(levels, spec);
}

LayerGraph build_head(const std::vector<LevelSpec>& levels, const HeadSpec& spec) {
  return spec.variant == HeadVariant::Decoupled ? build_decoupled_head(levels, spec)
                                                : build_efficient_head(levels, spec);
}

LayerGraph build_coupled_head(const std::vector<LevelSpec>& levels, std::size_t n_anchors,
                              std::size_t n_classes) {
  validate_levels(levels);
  if (!n_anchors || !n_classes) throw ConfigError("coupled head: counts must be positive");
  LayerGraph g;
  g.levels = levels;
  for (std::size_t lv = 0; lv < levels.size(); ++lv) {
    const LevelSpec& L = levels[lv];
    g.layers.push_back({"L" + std::to_string(lv) + ".detect", lv, LayerRole::Coupled, 1,
                        L.in_channels, n_anchors * (5 + n_classes), 1, true, false, L.height,
                        L.width, -1});
  }
  g.validate();
  return g;
}

HeadParams HeadParams::init(const LayerGraph& graph, Rng& rng) {
  HeadParams p;
  for (const LayerDesc& l : graph.layers) {
    const double fan_in = static_cast<double>(l.kernel * l.kernel * l.cin / l.groups);
    const double bound = l.activation ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
    p.weights.push_back(rng.uniform_tensor({l.cout, l.cin / l.groups, l.kernel, l.kernel},
                                           -bound, bound));
    p.biases.push_back(l.bias ? Tensor::zeros({l.cout}) : Tensor());
  }
  return p;
}

HeadParams HeadParams::zeros(const LayerGraph& graph) {
  HeadParams p;
  for (const LayerDesc& l : graph.layers) {
    p.weights.push_back(Tensor::zeros({l.cout, l.cin / l.groups, l.kernel, l.kernel}));
    p.biases.push_back(l.bias ? Tensor::zeros({l.cout}) : Tensor());
  }
  return p;
}

HeadVars HeadVars::record(ad::Tape& tape, const HeadParams& params) {
  HeadVars v;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    v.weights.push_back(tape.leaf(params.weights[i], "head.w"));
    v.biases.push_back(params.biases[i].empty()
                           ? std::nullopt
                           : std::optional<ad::Var>(tape.leaf(params.biases[i], "head.b")));
  }
  return v;
}

std::vector<ad::Var> head_forward(const LayerGraph& graph, const std::vector<ad::Var>& features,
                                  const HeadVars& params) {
  graph.validate();
  if (features.size() != graph.levels.size())
    throw DimensionError("head_forward: " + std::to_string(features.size()) +
                         " feature maps for " + std::to_string(graph.levels.size()) + " levels");
  if (params.weights.size() != graph.layers.size())
    throw DimensionError("head_forward: parameter count does not match graph");
  for (std::size_t lv = 0; lv < graph.levels.size(); ++lv) {
    const LevelSpec& L = graph.levels[lv];
    const Shape want{L.in_channels, L.height, L.width};
    if (features[lv].shape() != want)
      throw DimensionError("head_forward: level " + std::to_string(lv) + " feature " +
                           shape_str(features[lv].shape()) + ", expected " + shape_str(want));
  }

  std::vector<ad::Var> outs;
  outs.reserve(graph.layers.size());
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerDesc& l = graph.layers[i];
    ad::Var in = l.source < 0 ? features[l.level] : outs[static_cast<std::size_t>(l.source)];
    ad::Var y = ad::conv2d(in, params.weights[i], params.biases[i],
                           {.stride = 1, .pad = l.kernel / 2, .groups = l.groups});
    outs.push_back(l.activation ? ad::silu(y) : y);
  }

  std::vector<ad::Var> result;
  for (std::size_t lv = 0; lv < graph.levels.size(); ++lv) {
    const auto cls_i = graph.find(lv, LayerRole::ClsPred);
    const auto reg_i = graph.find(lv, LayerRole::RegPred);
    const auto obj_i = graph.find(lv, LayerRole::ObjPred);
    if (cls_i.size() != 1 || reg_i.size() != 1 || obj_i.size() != 1)
      throw ConfigError("head_forward: level " + std::to_string(lv) +
                        " needs exactly one cls, reg and obj prediction layer");
    const std::size_t na = graph.layers[obj_i[0]].cout;
    const std::size_t nc = graph.layers[cls_i[0]].cout / na;
    const std::size_t per = 5 + nc;
    const std::size_t hw = graph.levels[lv].height * graph.levels[lv].width;
    ad::Var stacked = ad::concat({outs[reg_i[0]], outs[obj_i[0]], outs[cls_i[0]]});
    std::vector<std::size_t> idx;
    idx.reserve(na * per * hw);
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t f = 0; f < per; ++f) {
        const std::size_t src = f < 4 ? a * 4 + f : f == 4 ? 4 * na + a : 5 * na + a * nc + (f - 5);
        for (std::size_t p = 0; p < hw; ++p) idx.push_back(src * hw + p);
      }
    result.push_back(ad::gather(stacked, std::move(idx),
                                {na * per, graph.levels[lv].height, graph.levels[lv].width}));
  }
  return result;
}

std::vector<Tensor> head_forward(const LayerGraph& graph, const std::vector<Tensor>& features,
                                 const HeadParams& params) {
  ad::Tape tape;
  std::vector<ad::Var> fv;
  for (const Tensor& f : features) fv.push_back(tape.leaf(f, "feature"));
  std::vector<Tensor> out;
  for (ad::Var v : head_forward(graph, fv, HeadVars::record(tape, params)))
    out.push_back(v.value());
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

PredictionMap decode_predictions(const Tensor& raw, const std::vector<AnchorSize>& anchors,
                                 std::size_t stride, std::size_t level) {
  if (raw.rank() != 3) throw DimensionError("decode_predictions expects [A*(5+n),H,W]");
  const std::size_t na = anchors.size();
  if (na == 0 || raw.dim(0) % na != 0 || raw.dim(0) / na < 6)
    throw ConfigError("decode_predictions: " + std::to_string(raw.dim(0)) +
                      " channels do not split over " + std::to_string(na) + " anchors");
  const std::size_t per = raw.dim(0) / na;
  const std::size_t nc = per - 5;
  const std::size_t h = raw.dim(1), w = raw.dim(2);
  const double s = static_cast<double>(stride);
  PredictionMap out;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        auto field = [&](std::size_t f) { return raw.at(a * per + f, r, c); };
        const double cx = (2.0 * sigmoid(field(0)) - 0.5 + static_cast<double>(c)) * s;
        const double cy = (2.0 * sigmoid(field(1)) - 0.5 + static_cast<double>(r)) * s;
        const double gw = 2.0 * sigmoid(field(2));
        const double gh = 2.0 * sigmoid(field(3));
        const double bw = std::max(gw * gw * anchors[a].w, 1e-9);
        const double bh = std::max(gh * gh * anchors[a].h, 1e-9);
        Prediction p{Box(cx, cy, bw, bh), std::vector<double>(nc), sigmoid(field(4))};
        for (std::size_t k = 0; k < nc; ++k) p.class_probs[k] = sigmoid(field(5 + k));
        out.emplace(CellKey{level, a, r, c}, std::move(p));
      }
  return out;
}

}  // namespace lfdet
