#include "lfdet/toy.hpp"

#include <cmath>
#include <numbers>

#include "lfdet/errors.hpp"

namespace lfdet {

namespace {

constexpr double kLossEps = 1e-9;

}  // namespace

ToyConfig ToyConfig::two_level() {
  ToyConfig c;
  c.n_levels = 2;
  c.anchors = {{{8, 8}, {14, 14}}, {{18, 18}, {28, 28}}};
  return c;
}

ToyConfig ToyConfig::miniature() {
  ToyConfig c;
  c.scene = {.size = 16, .channels = 1, .min_extent = 4, .max_extent = 12, .noise = 0.05};
  c.backbone_channels = {2, 3, 4};
  c.head = {HeadVariant::Efficient, 4, 1, 1, 2};
  c.anchors = {{{8, 8}}};
  return c;
}

void ToyConfig::validate() const {
  if (backbone_channels.size() != 3) throw ConfigError("backbone needs exactly 3 blocks");
  for (std::size_t c : backbone_channels)
    if (!c) throw ConfigError("backbone channels must be positive");
  if (n_levels != 1 && n_levels != 2) throw ConfigError("n_levels must be 1 or 2");
  if (scene.size % 8 != 0) throw ConfigError("image size must be a multiple of 8");
  if (anchors.size() != n_levels)
    throw ConfigError("anchors: need one anchor list per level");
  for (const auto& lv : anchors) {
    if (lv.size() != head.n_anchors)
      throw ConfigError("anchors: each level needs head.n_anchors entries");
    for (const AnchorSize& a : lv)
      if (!(a.w > 0) || !(a.h > 0)) throw ConfigError("anchors must have positive extents");
  }
  if (!(lambda >= 0)) throw ConfigError("lambda must be non-negative");
  if (!(anchor_t > 1)) throw ConfigError("anchor_t must exceed 1");
}

std::vector<LevelSpec> ToyConfig::level_specs() const {
  const std::size_t s = scene.size;
  std::vector<LevelSpec> out;
  if (n_levels == 2) out.push_back({backbone_channels[1], 4, s / 4, s / 4});
  out.push_back({backbone_channels[2], 8, s / 8, s / 8});
  return out;
}

std::vector<AnchorLevel> ToyConfig::anchor_levels() const {
  std::vector<AnchorLevel> out;
  const auto specs = level_specs();
  for (std::size_t i = 0; i < specs.size(); ++i)
    out.push_back({{specs[i].height, specs[i].width, specs[i].stride}, anchors[i]});
  return out;
}

ToyModel ToyModel::init(const ToyConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ToyModel m;
  m.config = config;
  std::size_t cin = config.scene.channels;
  for (std::size_t cout : config.backbone_channels) {
    const double bound = std::sqrt(6.0 / static_cast<double>(9 * cin));
    m.backbone_w.push_back(rng.uniform_tensor({cout, cin, 3, 3}, -bound, bound));
    m.backbone_b.push_back(Tensor::zeros({cout}));
    cin = cout;
  }
  const auto specs = config.level_specs();
  if (config.use_lfsa)
    for (const LevelSpec& s : specs) m.lfsa.push_back(LfsaParams::init(s.in_channels, rng));
  m.head_graph = build_head(specs, config.head);
  m.head = HeadParams::init(m.head_graph, rng);
  return m;
}

std::vector<NamedTensor> ToyModel::parameters() {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < backbone_w.size(); ++i) {
    out.push_back({"backbone." + std::to_string(i) + ".w", &backbone_w[i]});
    out.push_back({"backbone." + std::to_string(i) + ".b", &backbone_b[i]});
  }
  for (std::size_t l = 0; l < lfsa.size(); ++l)
    for (LfsaParams::Group g : lfsa[l].groups())
      out.push_back({"lfsa" + std::to_string(l) + "." + g.name, g.tensor});
  for (std::size_t i = 0; i < head.weights.size(); ++i) {
    const std::string& name = head_graph.layers[i].name;
    out.push_back({"head." + name + ".w", &head.weights[i]});
    if (!head.biases[i].empty()) out.push_back({"head." + name + ".b", &head.biases[i]});
  }
  return out;
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = 0;
  for (const NamedTensor& p : const_cast<ToyModel*>(this)->parameters()) n += p.tensor->size();
  return n;
}

std::vector<ad::Var> toy_forward(const ToyModel& model, ad::Var image,
                                 const std::vector<ad::Var>& params) {
  std::size_t next = 0;
  auto take = [&] {
    if (next >= params.size()) throw ContractError("toy_forward: too few parameter variables");
    return params[next++];
  };
  std::vector<ad::Var> blocks;
  ad::Var x = image;
  for (std::size_t i = 0; i < model.backbone_w.size(); ++i) {
    ad::Var w = take();
    ad::Var b = take();
    x = ad::silu(ad::conv2d(x, w, b, {.stride = 2, .pad = 1, .groups = 1}));
    blocks.push_back(x);
  }
  std::vector<ad::Var> features;
  if (model.config.n_levels == 2) features.push_back(blocks[1]);
  features.push_back(blocks[2]);

  if (model.config.use_lfsa)
    for (ad::Var& f : features) {
      LfsaVars lv{take(), take(), take(), take(), take(), take(),
                  take(), take(), take(), take(), take()};
      f = lfsa_forward(f, lv);
    }

  HeadVars hv;
  for (std::size_t i = 0; i < model.head.weights.size(); ++i) {
    hv.weights.push_back(take());
    hv.biases.push_back(model.head.biases[i].empty() ? std::nullopt
                                                     : std::optional<ad::Var>(take()));
  }
  if (next != params.size()) throw ContractError("toy_forward: unused parameter variables");
  return head_forward(model.head_graph, features, hv);
}

LossTerms detection_loss(const std::vector<ad::Var>& raw, const std::vector<AnchorLevel>& levels,
                         const AssignmentResult& assignment, const std::vector<GroundTruth>& gts,
                         const LossWeights& weights) {
  if (raw.size() != levels.size())
    throw ContractError("detection_loss: one raw tensor per level required");
  if (raw.empty()) throw ContractError("detection_loss: empty grid (no cells to score)");
  ad::Tape& tape = *raw.front().tape;

  std::vector<ad::Var> obj_terms;
  std::size_t n_cells = 0;
  std::vector<ad::Var> cls_terms, ciou_terms;
  std::size_t n_pos = 0, n_cls_entries = 0;

  for (std::size_t lv = 0; lv < levels.size(); ++lv) {
    const Tensor& r = raw[lv].value();
    const std::size_t na = levels[lv].anchors.size();
    if (r.rank() != 3 || na == 0 || r.dim(0) % na != 0 || r.dim(1) != levels[lv].grid.rows ||
        r.dim(2) != levels[lv].grid.cols)
      throw DimensionError("detection_loss: raw " + r.shape_str() + " does not match level grid");
    const std::size_t per = r.dim(0) / na, nc = per - 5;
    const std::size_t h = r.dim(1), w = r.dim(2), hw = h * w;
    auto flat = [&](std::size_t a, std::size_t f, std::size_t row, std::size_t col) {
      return (a * per + f) * hw + row * w + col;
    };

    std::vector<std::size_t> obj_idx;
    Tensor obj_target({na * hw});
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t p = 0; p < hw; ++p) obj_idx.push_back(flat(a, 4, p / w, p % w));

    std::vector<std::size_t> box_idx[4], cls_idx;
    std::vector<double> cls_t, off_x, off_y, anc_w, anc_h, gx, gy, gw, gh;
    for (const AssignmentEntry& e : assignment.entries) {
      if (e.key.level != lv) continue;
      if (e.key.anchor >= na || e.key.row >= h || e.key.col >= w || e.gt_index >= gts.size())
        throw ContractError("detection_loss: assignment does not fit the predictions");
      obj_target[e.key.anchor * hw + e.key.row * w + e.key.col] = 1.0;
      for (std::size_t f = 0; f < 4; ++f)
        box_idx[f].push_back(flat(e.key.anchor, f, e.key.row, e.key.col));
      const GroundTruth& gt = gts[e.gt_index];
      for (std::size_t c = 0; c < nc; ++c) {
        cls_idx.push_back(flat(e.key.anchor, 5 + c, e.key.row, e.key.col));
        cls_t.push_back(c == gt.class_id ? 1.0 : 0.0);
      }
      const double s = static_cast<double>(levels[lv].grid.stride);
      off_x.push_back((static_cast<double>(e.key.col) - 0.5) * s);
      off_y.push_back((static_cast<double>(e.key.row) - 0.5) * s);
      anc_w.push_back(levels[lv].anchors[e.key.anchor].w);
      anc_h.push_back(levels[lv].anchors[e.key.anchor].h);
      gx.push_back(gt.box.cx());
      gy.push_back(gt.box.cy());
      gw.push_back(gt.box.w());
      gh.push_back(gt.box.h());
    }
    n_cells += obj_idx.size();
    ad::Var obj_logits = ad::gather(raw[lv], obj_idx, {obj_idx.size()});
    obj_terms.push_back(ad::sum(ad::bce_with_logits(obj_logits, obj_target)));

    const std::size_t p = off_x.size();
    if (p == 0) continue;
    n_pos += p;
    n_cls_entries += cls_idx.size();
    ad::Var cls_logits = ad::gather(raw[lv], cls_idx, {cls_idx.size()});
    cls_terms.push_back(ad::sum(ad::bce_with_logits(cls_logits, Tensor({cls_t.size()}, cls_t))));

    auto konst = [&](std::vector<double> v) { return tape.leaf(Tensor({p}, std::move(v)), "const"); };
    const double s = static_cast<double>(levels[lv].grid.stride);
    ad::Var tx = ad::gather(raw[lv], box_idx[0], {p});
    ad::Var ty = ad::gather(raw[lv], box_idx[1], {p});
    ad::Var tw = ad::gather(raw[lv], box_idx[2], {p});
    ad::Var th = ad::gather(raw[lv], box_idx[3], {p});
    ad::Var px = ad::add(ad::scale(ad::sigmoid(tx), 2.0 * s), konst(off_x));
    ad::Var py = ad::add(ad::scale(ad::sigmoid(ty), 2.0 * s), konst(off_y));
    ad::Var pw = ad::mul(ad::square(ad::scale(ad::sigmoid(tw), 2.0)), konst(anc_w));
    ad::Var ph = ad::mul(ad::square(ad::scale(ad::sigmoid(th), 2.0)), konst(anc_h));
    ad::Var qx = konst(gx), qy = konst(gy), qw = konst(gw), qh = konst(gh);

    ad::Var p_x1 = ad::sub(px, ad::scale(pw, 0.5)), p_x2 = ad::add(px, ad::scale(pw, 0.5));
    ad::Var p_y1 = ad::sub(py, ad::scale(ph, 0.5)), p_y2 = ad::add(py, ad::scale(ph, 0.5));
    ad::Var g_x1 = ad::sub(qx, ad::scale(qw, 0.5)), g_x2 = ad::add(qx, ad::scale(qw, 0.5));
    ad::Var g_y1 = ad::sub(qy, ad::scale(qh, 0.5)), g_y2 = ad::add(qy, ad::scale(qh, 0.5));
    ad::Var zero = tape.leaf(Tensor({p}), "const");

    ad::Var iw = ad::maximum(ad::sub(ad::minimum(p_x2, g_x2), ad::maximum(p_x1, g_x1)), zero);
    ad::Var ih = ad::maximum(ad::sub(ad::minimum(p_y2, g_y2), ad::maximum(p_y1, g_y1)), zero);
    ad::Var inter = ad::mul(iw, ih);
    ad::Var uni = ad::add_scalar(ad::sub(ad::add(ad::mul(pw, ph), ad::mul(qw, qh)), inter), kLossEps);
    ad::Var iou = ad::div(inter, uni);
    ad::Var cw = ad::sub(ad::maximum(p_x2, g_x2), ad::minimum(p_x1, g_x1));
    ad::Var ch = ad::sub(ad::maximum(p_y2, g_y2), ad::minimum(p_y1, g_y1));
    ad::Var c2 = ad::add_scalar(ad::add(ad::square(cw), ad::square(ch)), kLossEps);
    ad::Var rho2 = ad::add(ad::square(ad::sub(px, qx)), ad::square(ad::sub(py, qy)));
    ad::Var dt = ad::sub(ad::atan(ad::div(qw, qh)), ad::atan(ad::div(pw, ph)));
    ad::Var v = ad::scale(ad::square(dt), 4.0 / (std::numbers::pi * std::numbers::pi));
    ad::Var alpha = ad::div(v, ad::add_scalar(ad::sub(v, iou), 1.0 + kLossEps));
    ad::Var ciou_v = ad::sub(iou, ad::add(ad::div(rho2, c2), ad::mul(alpha, v)));
    ciou_terms.push_back(ad::sum(ad::add_scalar(ad::scale(ciou_v, -1.0), 1.0)));
  }
  if (n_cells == 0) throw ContractError("detection_loss: empty grid (no cells to score)");

  auto total_of = [](const std::vector<ad::Var>& parts) {
    ad::Var acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(acc, parts[i]);
    return acc;
  };
  LossTerms out;
  out.positives = n_pos;
  ad::Var total = ad::scale(total_of(obj_terms), weights.obj / static_cast<double>(n_cells));
  out.obj = total.value()[0];
  if (n_pos > 0) {
    ad::Var cls = ad::scale(total_of(cls_terms), weights.cls / static_cast<double>(n_cls_entries));
    ad::Var reg = ad::scale(total_of(ciou_terms), weights.reg / static_cast<double>(n_pos));
    out.cls = cls.value()[0];
    out.reg = reg.value()[0];
    total = ad::add(ad::add(total, cls), reg);
  }
  out.total = total;
  return out;
}

StepResult evaluate(ToyModel& model, const Scene& scene,
                    const std::optional<AssignmentResult>& fixed, bool want_grads) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  std::vector<NamedTensor> params = model.parameters();
  for (const NamedTensor& p : params) vars.push_back(tape.leaf(*p.tensor, p.name));
  ad::Var image = tape.leaf(scene.image, "image");
  std::vector<ad::Var> raw = toy_forward(model, image, vars);
  const std::vector<AnchorLevel> levels = model.config.anchor_levels();
  for (ad::Var v : raw)
    if (!v.value().all_finite()) throw NumericError("non-finite predictions");

  StepResult r;
  if (fixed) {
    r.assignment = *fixed;
  } else {
    PredictionMap preds;
    for (std::size_t lv = 0; lv < raw.size(); ++lv)
      preds.merge(decode_predictions(raw[lv].value(), levels[lv].anchors, levels[lv].grid.stride, lv));
    r.assignment = assign_scene(scene.gts, preds, levels, model.config.lambda, model.config.anchor_t);
  }
  r.terms = detection_loss(raw, levels, r.assignment, scene.gts, model.config.weights);
  r.loss = r.terms.total.value()[0];
  if (want_grads && std::isfinite(r.loss)) {
    ad::Gradients g = tape.backward(r.terms.total);
    for (ad::Var v : vars) r.grads.push_back(g.wrt(v));
  }
  r.terms.total = {};  // the tape dies with this scope
  return r;
}

Scene stream_scene(std::uint64_t seed, std::size_t step, const SceneOptions& opt) {
  const std::uint64_t s = derive_seed(seed, step);
  Rng rng(s);
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, kMaxSceneObjects));
  return gen_scene(rng.next(), n, opt);
}

std::vector<double> train(ToyModel& model, const TrainOptions& opt) {
  if (opt.steps == 0) throw ContractError("train: steps must be at least 1");
  if (!(opt.lr >= 0.0) || !std::isfinite(opt.lr)) throw ContractError("train: lr must be finite and non-negative");
  std::vector<double> losses;
  losses.reserve(opt.steps);
  for (std::size_t step = 0; step < opt.steps; ++step) {
    const std::size_t pos = opt.scene_cycle ? step % opt.scene_cycle : step;
    const Scene scene = stream_scene(opt.seed, pos, model.config.scene);
    StepResult r;
    try {
      r = evaluate(model, scene, std::nullopt, true);
    } catch (const NumericError& e) {
      throw NumericError("non-finite loss at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(r.loss))
      throw NumericError("non-finite loss at step " + std::to_string(step));
    losses.push_back(r.loss);
    std::vector<NamedTensor> params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].tensor->data();
      auto g = r.grads[i].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= opt.lr * g[j];
    }
  }
  return losses;
}

}  // namespace lfdet
