#include "lfdet/io.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lfdet/errors.hpp"
#include "lfdet/lfsa.hpp"

namespace lfdet::io {

using json = nlohmann::ordered_json;

namespace {

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError("line " + std::to_string(line) + ": " + e.what());
  }
}

// Structural accessors for documents that fail fast with a field path.
[[noreturn]] void bad(const std::string& path, const std::string& why) {
  throw ParseError("field '" + path + "': " + why);
}

const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) bad(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) bad(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

void only(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) bad(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      bad(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
}

std::string sub(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}
std::string sub(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

double number(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_number()) bad(sub(path, key), "expected a number");
  return v.get<double>();
}

std::size_t count(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_number_unsigned()) bad(sub(path, key), "expected a non-negative integer");
  return v.get<std::size_t>();
}

const json& array(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_array()) bad(sub(path, key), "expected an array");
  return v;
}

template <typename F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

Box read_box(const json& j, const std::string& path) {
  only(j, path, {"cx", "cy", "w", "h"});
  return with_path(path, [&] {
    return Box(number(j, path, "cx"), number(j, path, "cy"), number(j, path, "w"),
               number(j, path, "h"));
  });
}

json box_json(const Box& b) {
  return json{{"cx", b.cx()}, {"cy", b.cy()}, {"w", b.w()}, {"h", b.h()}};
}

}  // namespace

SceneDocument parse_scene(std::string_view text) {
  const json root = parse_json(text);
  only(root, "", {"gts", "anchors", "grid", "predictions", "lambda", "anchor_t"});
  SceneDocument doc;

  const json& gts = array(root, "", "gts");
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const std::string p = sub("gts", i);
    only(gts[i], p, {"cx", "cy", "w", "h", "class"});
    Box b = with_path(p, [&] {
      return Box(number(gts[i], p, "cx"), number(gts[i], p, "cy"), number(gts[i], p, "w"),
                 number(gts[i], p, "h"));
    });
    doc.gts.push_back({b, count(gts[i], p, "class")});
  }

  const json& anchors = array(root, "", "anchors");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const json& a = anchors[i];
    const std::string p = sub("anchors", i);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
      bad(p, "expected [w, h]");
    AnchorSize an{a[0].get<double>(), a[1].get<double>()};
    if (!(an.w > 0) || !(an.h > 0)) throw InputError(p + ": anchor extents must be positive");
    doc.anchors.push_back(an);
  }

  const json& grid = member(root, "", "grid");
  only(grid, "grid", {"rows", "cols", "stride"});
  doc.grid = {count(grid, "grid", "rows"), count(grid, "grid", "cols"),
              count(grid, "grid", "stride")};
  if (!doc.grid.rows || !doc.grid.cols || !doc.grid.stride)
    bad("grid", "rows, cols and stride must be positive");

  const json& preds = array(root, "", "predictions");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const json& pj = preds[i];
    const std::string p = sub("predictions", i);
    only(pj, p, {"level", "anchor", "row", "col", "box", "class_probs", "objectness"});
    CellKey key{count(pj, p, "level"), count(pj, p, "anchor"), count(pj, p, "row"),
                count(pj, p, "col")};
    if (key.level != 0) bad(sub(p, "level"), "this document describes level 0 only");
    if (key.anchor >= doc.anchors.size()) bad(sub(p, "anchor"), "no such anchor");
    if (key.row >= doc.grid.rows || key.col >= doc.grid.cols) bad(p, "cell outside the grid");
    Prediction pred{read_box(member(pj, p, "box"), sub(p, "box")), {}, number(pj, p, "objectness")};
    const json& probs = array(pj, p, "class_probs");
    for (std::size_t c = 0; c < probs.size(); ++c) {
      if (!probs[c].is_number()) bad(sub(sub(p, "class_probs"), c), "expected a number");
      pred.class_probs.push_back(probs[c].get<double>());
    }
    with_path(p, [&] {
      pred.validate();
      return 0;
    });
    if (!doc.predictions.emplace(key, std::move(pred)).second) bad(p, "duplicate cell");
  }

  if (root.contains("lambda")) doc.lambda = number(root, "", "lambda");
  if (root.contains("anchor_t")) doc.anchor_t = number(root, "", "anchor_t");
  if (!(doc.lambda >= 0)) throw InputError("lambda must be non-negative");
  return doc;
}

std::string emit_scene(const SceneDocument& doc) {
  json root;
  root["gts"] = json::array();
  for (const GroundTruth& g : doc.gts) {
    json j = box_json(g.box);
    j["class"] = g.class_id;
    root["gts"].push_back(j);
  }
  root["anchors"] = json::array();
  for (const AnchorSize& a : doc.anchors) root["anchors"].push_back({a.w, a.h});
  root["grid"] = {{"rows", doc.grid.rows}, {"cols", doc.grid.cols}, {"stride", doc.grid.stride}};
  root["predictions"] = json::array();
  for (const auto& [k, p] : doc.predictions)
    root["predictions"].push_back({{"level", k.level},
                                   {"anchor", k.anchor},
                                   {"row", k.row},
                                   {"col", k.col},
                                   {"box", box_json(p.box)},
                                   {"class_probs", p.class_probs},
                                   {"objectness", p.objectness}});
  root["lambda"] = doc.lambda;
  root["anchor_t"] = doc.anchor_t;
  return root.dump(2) + "\n";
}

std::string emit_assignment(const AssignmentResult& result) {
  json root;
  root["assignments"] = json::array();
  for (const AssignmentEntry& e : result.entries) {
    json top = json::array();
    for (const TopEntry& t : e.top2)
      top.push_back({{"gt_index", t.gt_index}, {"ciou", t.ciou}, {"cost", t.cost}});
    root["assignments"].push_back({{"level", e.key.level},
                                   {"anchor", e.key.anchor},
                                   {"row", e.key.row},
                                   {"col", e.key.col},
                                   {"gt_index", e.gt_index},
                                   {"cost", e.cost},
                                   {"top2", top}});
  }
  return root.dump(2) + "\n";
}

AssignmentResult parse_assignment(std::string_view text) {
  const json root = parse_json(text);
  only(root, "", {"assignments"});
  AssignmentResult r;
  const json& arr = array(root, "", "assignments");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = sub("assignments", i);
    const json& j = arr[i];
    only(j, p, {"level", "anchor", "row", "col", "gt_index", "cost", "top2"});
    AssignmentEntry e;
    e.key = {count(j, p, "level"), count(j, p, "anchor"), count(j, p, "row"), count(j, p, "col")};
    e.gt_index = count(j, p, "gt_index");
    e.cost = number(j, p, "cost");
    const json& top = array(j, p, "top2");
    for (std::size_t t = 0; t < top.size(); ++t) {
      const std::string tp = sub(sub(p, "top2"), t);
      only(top[t], tp, {"gt_index", "ciou", "cost"});
      e.top2.push_back({count(top[t], tp, "gt_index"), number(top[t], tp, "ciou"),
                        number(top[t], tp, "cost")});
    }
    r.entries.push_back(std::move(e));
  }
  return r;
}

CostDocument make_cost_document(const std::vector<LevelSpec>& levels, const HeadSpec& decoupled,
                                const HeadSpec& efficient) {
  const HeadComparison cmp = compare_heads(levels, decoupled, efficient);
  CostDocument doc;
  doc.variants = {cmp.baseline, cmp.decoupled, cmp.efficient};
  doc.edh_dh_flops_ratio = cmp.flops_delta_ratio;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const LevelSpec& l = levels[i];
    doc.lfsa.push_back({i, l.in_channels, l.height, l.width,
                        lfsa_cost(l.in_channels, l.height, l.width),
                        lfsa_attention_macs(l.in_channels, l.height, l.width),
                        full_attention_macs(l.in_channels, l.height, l.width)});
  }
  return doc;
}

namespace {

json cost_json(const LayerCost& c) {
  return {{"params", c.params}, {"macs", c.macs}, {"flops", c.flops}};
}

LayerCost read_cost(const json& j, const std::string& p) {
  const auto u64 = [&](const char* key) {
    const json& v = member(j, p, key);
    if (!v.is_number_unsigned()) bad(sub(p, key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  };
  return {u64("params"), u64("macs"), u64("flops")};
}

std::int64_t signed_field(const json& j, const std::string& p, const char* key) {
  const json& v = member(j, p, key);
  if (!v.is_number_integer()) bad(sub(p, key), "expected an integer");
  return v.get<std::int64_t>();
}

}  // namespace

std::string emit_cost_report(const CostDocument& doc) {
  json root;
  root["convention"] = kCostConvention;
  root["variants"] = json::array();
  for (const CostReport& r : doc.variants) {
    json v = {{"name", r.name}};
    v.update(cost_json(r.total));
    v["delta_params"] = r.delta_params();
    v["delta_flops"] = r.delta_flops();
    v["layers"] = json::array();
    for (const CostEntry& e : r.layers) {
      json l = {{"name", e.name}};
      l.update(cost_json(e.cost));
      v["layers"].push_back(l);
    }
    root["variants"].push_back(v);
  }
  root["edh_dh_flops_ratio"] = doc.edh_dh_flops_ratio;
  root["reference_ratio"] = doc.reference_ratio;
  root["lfsa"] = json::array();
  for (const LfsaInsertion& l : doc.lfsa) {
    json j = {{"level", l.level}, {"channels", l.channels}, {"height", l.height}, {"width", l.width}};
    j.update(cost_json(l.cost));
    j["attention_macs"] = l.attention_macs;
    j["full_attention_macs"] = l.full_attention_macs;
    root["lfsa"].push_back(j);
  }
  return root.dump(2) + "\n";
}

CostDocument parse_cost_report(std::string_view text) {
  const json root = parse_json(text);
  only(root, "", {"convention", "variants", "edh_dh_flops_ratio", "reference_ratio", "lfsa"});
  if (member(root, "", "convention") != kCostConvention)
    bad("convention", std::string("expected '") + kCostConvention + "'");
  CostDocument doc;
  const json& vars = array(root, "", "variants");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const std::string p = sub("variants", i);
    const json& v = vars[i];
    only(v, p, {"name", "params", "macs", "flops", "delta_params", "delta_flops", "layers"});
    CostReport r;
    if (!member(v, p, "name").is_string()) bad(sub(p, "name"), "expected a string");
    r.name = v["name"].get<std::string>();
    r.total = read_cost(v, p);
    const std::int64_t dp = signed_field(v, p, "delta_params");
    const std::int64_t df = signed_field(v, p, "delta_flops");
    LayerCost base;
    base.params = static_cast<std::uint64_t>(static_cast<std::int64_t>(r.total.params) - dp);
    base.flops = static_cast<std::uint64_t>(static_cast<std::int64_t>(r.total.flops) - df);
    base.macs = base.flops / 2;
    r.baseline = base;
    const json& layers = array(v, p, "layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const std::string lp = sub(sub(p, "layers"), k);
      only(layers[k], lp, {"name", "params", "macs", "flops"});
      if (!member(layers[k], lp, "name").is_string()) bad(sub(lp, "name"), "expected a string");
      r.layers.push_back({layers[k]["name"].get<std::string>(), read_cost(layers[k], lp)});
    }
    doc.variants.push_back(std::move(r));
  }
  doc.edh_dh_flops_ratio = number(root, "", "edh_dh_flops_ratio");
  if (!member(root, "", "reference_ratio").is_string()) bad("reference_ratio", "expected a string");
  doc.reference_ratio = root["reference_ratio"].get<std::string>();
  const json& lf = array(root, "", "lfsa");
  for (std::size_t i = 0; i < lf.size(); ++i) {
    const std::string p = sub("lfsa", i);
    only(lf[i], p, {"level", "channels", "height", "width", "params", "macs", "flops",
                    "attention_macs", "full_attention_macs"});
    doc.lfsa.push_back({count(lf[i], p, "level"), count(lf[i], p, "channels"),
                        count(lf[i], p, "height"), count(lf[i], p, "width"), read_cost(lf[i], p),
                        lf[i]["attention_macs"].get<std::uint64_t>(),
                        lf[i]["full_attention_macs"].get<std::uint64_t>()});
  }
  return doc;
}

std::string emit_cost_table(const CostDocument& doc) {
  std::ostringstream os;
  os << "# convention: " << kCostConvention << "\n";
  os << std::left << std::setw(12) << "variant" << std::right << std::setw(14) << "params"
     << std::setw(18) << "macs" << std::setw(18) << "flops" << std::setw(14) << "d_params"
     << std::setw(18) << "d_flops" << "\n";
  for (const CostReport& r : doc.variants)
    os << std::left << std::setw(12) << r.name << std::right << std::setw(14) << r.total.params
       << std::setw(18) << r.total.macs << std::setw(18) << r.total.flops << std::setw(14)
       << r.delta_params() << std::setw(18) << r.delta_flops() << "\n";
  char ratio[64];
  std::snprintf(ratio, sizeof ratio, "%.6f", doc.edh_dh_flops_ratio);
  os << "edh_dh_flops_ratio " << ratio << " (reference " << doc.reference_ratio << ")\n";
  for (const LfsaInsertion& l : doc.lfsa) {
    char share[64];
    std::snprintf(share, sizeof share, "%.6f",
                  l.full_attention_macs
                      ? static_cast<double>(l.attention_macs) / static_cast<double>(l.full_attention_macs)
                      : 0.0);
    os << "lfsa L" << l.level << " C=" << l.channels << " " << l.height << "x" << l.width
       << " params " << l.cost.params << " macs " << l.cost.macs << " flops " << l.cost.flops
       << " attention/full " << share << "\n";
  }
  return os.str();
}

Config Config::defaults() {
  Config c;
  c.levels = {{256, 8, 80, 80}, {512, 16, 40, 40}, {1024, 32, 20, 20}};
  return c;
}

ToyConfig Config::toy_config() const {
  ToyConfig t = toy.levels == 2 ? ToyConfig::two_level() : ToyConfig{};
  t.use_lfsa = toy.lfsa;
  if (toy.head == HeadVariant::Decoupled) t.head = {HeadVariant::Decoupled, 64, 2, 2, 2};
  t.lambda = lambda;
  return t;
}

namespace {

// Config parsing collects every problem before failing.
class ConfigReader {
 public:
  void issue(const std::string& path, const std::string& why) { issues_.push_back(path + ": " + why); }

  void only(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) {
      issue(path.empty() ? "<root>" : path, "expected an object");
      return;
    }
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
        issue(sub(path, it.key().c_str()), "unknown field");
  }

  void read(const json& obj, const std::string& path, const char* key, std::size_t& out,
            bool positive = true) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const json& v = obj[key];
    if (!v.is_number_unsigned() || (positive && v.get<std::size_t>() == 0))
      issue(sub(path, key), positive ? "expected a positive integer" : "expected a non-negative integer");
    else
      out = v.get<std::size_t>();
  }

  void read(const json& obj, const std::string& path, const char* key, double& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const json& v = obj[key];
    if (!v.is_number())
      issue(sub(path, key), "expected a number");
    else
      out = v.get<double>();
  }

  void read(const json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const json& v = obj[key];
    if (!v.is_boolean())
      issue(sub(path, key), "expected true or false");
    else
      out = v.get<bool>();
  }

  void finish() const {
    if (issues_.empty()) return;
    std::string msg = "invalid configuration:";
    for (const std::string& s : issues_) msg += "\n  " + s;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> issues_;
};

}  // namespace

Config parse_config(std::string_view text) {
  const json root = parse_json(text);
  Config c = Config::defaults();
  ConfigReader rd;
  rd.only(root, "", {"levels", "n_anchors", "n_classes", "decoupled", "efficient", "lambda",
                     "report_format", "seed", "toy"});
  if (!root.is_object()) rd.finish();

  if (root.contains("levels")) {
    const json& lv = root["levels"];
    if (!lv.is_array()) {
      rd.issue("levels", "expected an array");
    } else {
      c.levels.clear();
      for (std::size_t i = 0; i < lv.size(); ++i) {
        const std::string p = sub("levels", i);
        rd.only(lv[i], p, {"in_channels", "stride", "height", "width"});
        LevelSpec s{};
        for (const char* k : {"in_channels", "stride", "height", "width"})
          if (!lv[i].is_object() || !lv[i].contains(k)) rd.issue(sub(p, k), "missing");
        rd.read(lv[i], p, "in_channels", s.in_channels);
        rd.read(lv[i], p, "stride", s.stride);
        rd.read(lv[i], p, "height", s.height);
        rd.read(lv[i], p, "width", s.width);
        c.levels.push_back(s);
      }
    }
  }
  std::size_t anchors = c.decoupled.n_anchors, classes = c.decoupled.n_classes;
  rd.read(root, "", "n_anchors", anchors);
  rd.read(root, "", "n_classes", classes);
  for (auto [key, spec] : {std::pair{"decoupled", &c.decoupled}, std::pair{"efficient", &c.efficient}}) {
    spec->n_anchors = anchors;
    spec->n_classes = classes;
    if (!root.contains(key)) continue;
    rd.only(root[key], key, {"hidden_channels", "convs_per_branch"});
    rd.read(root[key], key, "hidden_channels", spec->hidden_channels);
    rd.read(root[key], key, "convs_per_branch", spec->convs_per_branch, false);
  }
  rd.read(root, "", "lambda", c.lambda);
  if (!(c.lambda >= 0)) rd.issue("lambda", "must be non-negative");
  if (root.contains("report_format")) {
    const json& f = root["report_format"];
    if (!f.is_string() || (f != "json" && f != "text"))
      rd.issue("report_format", "expected \"json\" or \"text\"");
    else
      c.report_format = f.get<std::string>();
  }
  rd.read(root, "", "seed", c.seed, false);
  if (root.contains("toy")) {
    const json& t = root["toy"];
    rd.only(t, "toy", {"steps", "lr", "seed", "head", "levels", "lfsa"});
    rd.read(t, "toy", "steps", c.toy.steps);
    rd.read(t, "toy", "lr", c.toy.lr);
    if (!(c.toy.lr >= 0)) rd.issue("toy.lr", "must be non-negative");
    rd.read(t, "toy", "seed", c.toy.seed, false);
    rd.read(t, "toy", "levels", c.toy.levels);
    if (c.toy.levels != 1 && c.toy.levels != 2) rd.issue("toy.levels", "must be 1 or 2");
    rd.read(t, "toy", "lfsa", c.toy.lfsa);
    if (t.is_object() && t.contains("head")) {
      const json& h = t["head"];
      if (h == "efficient")
        c.toy.head = HeadVariant::Efficient;
      else if (h == "decoupled")
        c.toy.head = HeadVariant::Decoupled;
      else
        rd.issue("toy.head", "expected \"efficient\" or \"decoupled\"");
    }
  }
  try {
    validate_levels(c.levels);
  } catch (const ConfigError& e) {
    rd.issue("levels", e.what());
  }
  rd.finish();
  return c;
}

std::string emit_config(const Config& c) {
  json root;
  root["levels"] = json::array();
  for (const LevelSpec& l : c.levels)
    root["levels"].push_back({{"in_channels", l.in_channels},
                              {"stride", l.stride},
                              {"height", l.height},
                              {"width", l.width}});
  root["n_anchors"] = c.decoupled.n_anchors;
  root["n_classes"] = c.decoupled.n_classes;
  root["decoupled"] = {{"hidden_channels", c.decoupled.hidden_channels},
                       {"convs_per_branch", c.decoupled.convs_per_branch}};
  root["efficient"] = {{"hidden_channels", c.efficient.hidden_channels},
                       {"convs_per_branch", c.efficient.convs_per_branch}};
  root["lambda"] = c.lambda;
  root["report_format"] = c.report_format;
  root["seed"] = c.seed;
  root["toy"] = {{"steps", c.toy.steps},
                 {"lr", c.toy.lr},
                 {"seed", c.toy.seed},
                 {"head", c.toy.head == HeadVariant::Efficient ? "efficient" : "decoupled"},
                 {"levels", c.toy.levels},
                 {"lfsa", c.toy.lfsa}};
  return root.dump(2) + "\n";
}

}  // namespace lfdet::io
