#include "lfdet/layer_graph.hpp"

#include "lfdet/errors.hpp"

namespace lfdet {

void validate_levels(const std::vector<LevelSpec>& levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const LevelSpec& l = levels[i];
    if (!l.in_channels || !l.stride || !l.height || !l.width)
      throw ConfigError("level " + std::to_string(i) + ": extents must be positive");
    const LevelSpec& f = levels.front();
    if (l.stride * l.height != f.stride * f.height || l.stride * l.width != f.stride * f.width)
      throw ConfigError("level " + std::to_string(i) +
                        ": stride * extent does not match the image size of level 0");
  }
}

std::string_view role_name(LayerRole role) {
  switch (role) {
    case LayerRole::Stem: return "stem";
    case LayerRole::ClsConv: return "cls_conv";
    case LayerRole::RegConv: return "reg_conv";
    case LayerRole::ClsPred: return "cls_pred";
    case LayerRole::RegPred: return "reg_pred";
    case LayerRole::ObjPred: return "obj_pred";
    case LayerRole::Coupled: return "coupled";
    case LayerRole::Projection: return "projection";
    case LayerRole::Mixing: return "mixing";
    case LayerRole::Depthwise: return "depthwise";
  }
  return "unknown";
}

void LayerGraph::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    auto fail = [&](const std::string& why) {
      throw ConfigError("layer " + std::to_string(i) + " (" + l.name + "): " + why);
    };
    if (l.level >= levels.size()) fail("level index out of range");
    if (!l.kernel || l.kernel % 2 == 0) fail("kernel must be positive and odd");
    if (!l.cin || !l.cout || !l.hout || !l.wout) fail("extents must be positive");
    if (!l.groups || l.cin % l.groups || l.cout % l.groups) fail("channels not divisible by groups");
    std::size_t src_c, src_h, src_w;
    if (l.source < 0) {
      const LevelSpec& lv = levels[l.level];
      src_c = lv.in_channels;
      src_h = lv.height;
      src_w = lv.width;
    } else {
      const auto s = static_cast<std::size_t>(l.source);
      if (s >= i) fail("source must precede the layer");
      if (layers[s].level != l.level) fail("source belongs to another level");
      src_c = layers[s].cout;
      src_h = layers[s].hout;
      src_w = layers[s].wout;
    }
    if (l.cin != src_c)
      fail("expects " + std::to_string(l.cin) + " input channels, source provides " +
           std::to_string(src_c));
    if (l.hout != src_h || l.wout != src_w) fail("output extents differ from source extents");
  }
}

std::vector<std::size_t> LayerGraph::find(std::size_t level, LayerRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].level == level && layers[i].role == role) out.push_back(i);
  return out;
}

void LayerGraph::append(const LayerGraph& other) {
  const std::size_t level_offset = levels.size();
  const int layer_offset = static_cast<int>(layers.size());
  levels.insert(levels.end(), other.levels.begin(), other.levels.end());
  for (LayerDesc l : other.layers) {
    l.level += level_offset;
    if (l.source >= 0) l.source += layer_offset;
    layers.push_back(std::move(l));
  }
}

}  // namespace lfdet
