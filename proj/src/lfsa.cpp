#include "lfdet/lfsa.hpp"

#include <cmath>

#include "lfdet/errors.hpp"
#include "lfdet/kernels.hpp"

namespace lfdet {

namespace {

Tensor delta_kernels(std::size_t c) {
  Tensor t({c, 1, kDepthwiseKernel, kDepthwiseKernel});
  for (std::size_t i = 0; i < c; ++i) t.at(i, 0, kDepthwisePad, kDepthwisePad) = 1.0;
  return t;
}

void expect_shape(const Tensor& t, const Shape& s, const char* name) {
  if (t.shape() != s)
    throw DimensionError(std::string("LfsaParams.") + name + " has shape " + t.shape_str() +
                         ", expected " + shape_str(s));
}

const kernels::ConvOptions kPointwise{};

}  // namespace

LfsaParams LfsaParams::init(std::size_t channels, Rng& rng) {
  if (!channels) throw DimensionError("LFSa needs at least one channel");
  const std::size_t c = channels;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c));
  LfsaParams p;
  p.channels = c;
  p.wq = rng.uniform_tensor({c, c, 1, 1}, -bound, bound);
  p.wk = rng.uniform_tensor({c, c, 1, 1}, -bound, bound);
  p.wv = rng.uniform_tensor({c, c, 1, 1}, -bound, bound);
  p.w_row = Tensor::zeros({c, c, 1, 1});
  p.w_col = Tensor::zeros({c, c, 1, 1});
  p.b_row = Tensor::zeros({c});
  p.b_col = Tensor::zeros({c});
  p.dw_row = delta_kernels(c);
  p.dw_col = delta_kernels(c);
  p.db_row = Tensor::zeros({c});
  p.db_col = Tensor::zeros({c});
  return p;
}

LfsaParams LfsaParams::random(std::size_t channels, Rng& rng, double scale) {
  LfsaParams p = init(channels, rng);
  for (Group g : p.groups()) *g.tensor = rng.uniform_tensor(g.tensor->shape(), -scale, scale);
  return p;
}

void LfsaParams::validate() const {
  if (!channels) throw DimensionError("LFSa needs at least one channel");
  const std::size_t c = channels;
  const Shape pw{c, c, 1, 1}, dw{c, 1, kDepthwiseKernel, kDepthwiseKernel}, b{c};
  expect_shape(wq, pw, "wq");
  expect_shape(wk, pw, "wk");
  expect_shape(wv, pw, "wv");
  expect_shape(w_row, pw, "w_row");
  expect_shape(w_col, pw, "w_col");
  expect_shape(b_row, b, "b_row");
  expect_shape(b_col, b, "b_col");
  expect_shape(dw_row, dw, "dw_row");
  expect_shape(dw_col, dw, "dw_col");
  expect_shape(db_row, b, "db_row");
  expect_shape(db_col, b, "db_col");
}

std::vector<LfsaParams::Group> LfsaParams::groups() {
  return {{"wq", &wq},         {"wk", &wk},         {"wv", &wv},         {"w_row", &w_row},
          {"b_row", &b_row},   {"w_col", &w_col},   {"b_col", &b_col},   {"dw_row", &dw_row},
          {"db_row", &db_row}, {"dw_col", &dw_col}, {"db_col", &db_col}};
}

LfsaVars LfsaVars::record(ad::Tape& tape, const LfsaParams& p) {
  p.validate();
  return {tape.leaf(p.wq, "wq"),         tape.leaf(p.wk, "wk"),
          tape.leaf(p.wv, "wv"),         tape.leaf(p.w_row, "w_row"),
          tape.leaf(p.b_row, "b_row"),   tape.leaf(p.w_col, "w_col"),
          tape.leaf(p.b_col, "b_col"),   tape.leaf(p.dw_row, "dw_row"),
          tape.leaf(p.db_row, "db_row"), tape.leaf(p.dw_col, "dw_col"),
          tape.leaf(p.db_col, "db_col")};
}

std::vector<ad::Var> LfsaVars::all() const {
  return {wq, wk, wv, w_row, b_row, w_col, b_col, dw_row, db_row, dw_col, db_col};
}

Tensor row_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2) throw DimensionError("row_attention expects [H,W], got " + q.shape_str());
  return kernels::row_attention(q, k, v).out;
}

Tensor col_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2) throw DimensionError("col_attention expects [H,W], got " + q.shape_str());
  return kernels::col_attention(q, k, v);
}

namespace {

void check_input(const Tensor& x, const LfsaParams& p) {
  p.validate();
  if (x.rank() != 3) throw DimensionError("LFSa input must be [C,H,W], got " + x.shape_str());
  if (x.dim(0) != p.channels)
    throw DimensionError("LFSa input has " + std::to_string(x.dim(0)) +
                         " channels, parameters expect " + std::to_string(p.channels));
}

}  // namespace

LfsaBranches lfsa_attention_stage(const Tensor& x, const LfsaParams& p) {
  check_input(x, p);
  LfsaBranches b;
  b.q = kernels::conv2d(x, p.wq, nullptr, kPointwise);
  b.k = kernels::conv2d(x, p.wk, nullptr, kPointwise);
  b.v = kernels::conv2d(x, p.wv, nullptr, kPointwise);
  b.f_row = kernels::row_attention(b.q, b.k, b.v).out;
  b.f_col = kernels::col_attention(b.q, b.k, b.v);
  return b;
}

Tensor lfsa_forward(const Tensor& x, const LfsaParams& p) {
  const LfsaBranches b = lfsa_attention_stage(x, p);
  const Tensor row = kernels::depthwise_conv2d(kernels::conv2d(b.f_row, p.w_row, &p.b_row, kPointwise),
                                               p.dw_row, &p.db_row, kDepthwisePad);
  const Tensor col = kernels::depthwise_conv2d(kernels::conv2d(b.f_col, p.w_col, &p.b_col, kPointwise),
                                               p.dw_col, &p.db_col, kDepthwisePad);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] + row[i]) + col[i];
  return out;
}

ad::Var lfsa_forward(ad::Var x, const LfsaVars& p) {
  const Shape& xs = x.shape();
  const Shape& ws = p.wq.shape();
  if (xs.size() != 3) throw DimensionError("LFSa input must be [C,H,W], got " + shape_str(xs));
  if (ws.size() != 4 || ws[0] != xs[0])
    throw DimensionError("LFSa input has " + std::to_string(xs[0]) +
                         " channels, parameters expect " + std::to_string(ws[0]));
  ad::Var q = ad::conv2d(x, p.wq, std::nullopt, kPointwise);
  ad::Var k = ad::conv2d(x, p.wk, std::nullopt, kPointwise);
  ad::Var v = ad::conv2d(x, p.wv, std::nullopt, kPointwise);
  ad::Var f_row = ad::row_attention(q, k, v);
  ad::Var f_col = ad::col_attention(q, k, v);
  ad::Var row = ad::depthwise_conv2d(ad::conv2d(f_row, p.w_row, p.b_row, kPointwise), p.dw_row,
                                     p.db_row, kDepthwisePad);
  ad::Var col = ad::depthwise_conv2d(ad::conv2d(f_col, p.w_col, p.b_col, kPointwise), p.dw_col,
                                     p.db_col, kDepthwisePad);
  return ad::add(ad::add(x, row), col);
}

std::uint64_t lfsa_attention_macs(std::size_t c, std::size_t h, std::size_t w) {
  const std::uint64_t C = c, H = h, W = w;
  return 2 * C * (H * H * W + W * W * H);
}

std::uint64_t full_attention_macs(std::size_t c, std::size_t h, std::size_t w) {
  const std::uint64_t C = c, n = std::uint64_t{h} * w;
  return 2 * n * n * C;
}

LayerGraph lfsa_conv_graph(std::size_t c, std::size_t h, std::size_t w) {
  LayerGraph g;
  g.levels.push_back({c, 1, h, w});
  auto add = [&](std::string name, LayerRole role, std::size_t k, std::size_t groups, bool bias,
                 int source) {
    g.layers.push_back({std::move(name), 0, role, k, c, c, groups, bias, false, h, w, source});
    return static_cast<int>(g.layers.size() - 1);
  };
  add("q", LayerRole::Projection, 1, 1, false, -1);
  add("k", LayerRole::Projection, 1, 1, false, -1);
  add("v", LayerRole::Projection, 1, 1, false, -1);
  // The 1x1 convs read the attention outputs, which have the input's shape.
  const int row = add("row.conv1x1", LayerRole::Mixing, 1, 1, true, -1);
  add("row.dw7x7", LayerRole::Depthwise, kDepthwiseKernel, c, true, row);
  const int col = add("col.conv1x1", LayerRole::Mixing, 1, 1, true, -1);
  add("col.dw7x7", LayerRole::Depthwise, kDepthwiseKernel, c, true, col);
  g.validate();
  return g;
}

LayerCost lfsa_cost(std::size_t c, std::size_t h, std::size_t w) {
  LayerCost total = graph_cost(lfsa_conv_graph(c, h, w)).total;
  const std::uint64_t attn = lfsa_attention_macs(c, h, w);
  total += LayerCost{0, attn, 2 * attn};
  return total;
}

}  // namespace lfdet
