#include "lfdet/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "lfdet/errors.hpp"

namespace lfdet::ad {

const Tensor& Var::value() const {
  if (!tape) throw ContractError("Var is not attached to a tape");
  return tape->value(id);
}

Tensor Gradients::wrt(Var v) const {
  if (v.id >= shapes_.size()) throw ContractError("variable was not recorded before backward");
  if (grads_[v.id]) return *grads_[v.id];
  return Tensor(shapes_[v.id]);
}

Var Tape::leaf(Tensor value, std::string_view name) {
  nodes_.push_back({std::string(name), std::move(value), {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (Var in : inputs) {
    if (in.tape != this) throw ContractError(std::string(op) + ": input from another tape");
    if (in.id >= nodes_.size())
      throw ContractError(std::string(op) + ": input id not yet recorded");
    ids.push_back(in.id);
  }
  nodes_.push_back({std::string(op), std::move(value), std::move(ids), std::move(backward)});
  return {this, nodes_.size() - 1};
}

namespace {

void accumulate(std::optional<Tensor>& slot, Tensor&& g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Gradients Tape::backward(Var output, const Tensor& seed) const {
  if (output.tape != this) throw ContractError("backward: output from another tape");
  const Tensor& out = nodes_.at(output.id).value;
  if (!seed.same_shape(out))
    throw DimensionError("backward: seed " + seed.shape_str() + " does not match output " +
                         out.shape_str());
  Gradients g;
  g.grads_.resize(nodes_.size());
  g.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) g.shapes_.push_back(n.value.shape());
  g.grads_[output.id] = seed;

  for (std::size_t id = output.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!g.grads_[id] || !node.backward) continue;
    std::vector<Tensor> in_grads = node.backward(*g.grads_[id]);
    g.order_.push_back(id);
    for (std::size_t i = 0; i < node.inputs.size() && i < in_grads.size(); ++i) {
      if (in_grads[i].empty()) continue;
      const std::size_t src = node.inputs[i];
      if (!in_grads[i].same_shape(nodes_[src].value))
        throw ContractError(node.op + ": gradient shape " + in_grads[i].shape_str() +
                            " != input shape " + nodes_[src].value.shape_str());
      accumulate(g.grads_[src], std::move(in_grads[i]));
    }
  }
  return g;
}

Gradients Tape::backward(Var output) const {
  return backward(output, Tensor::ones(output.shape()));
}

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) throw ContractError("Var is not attached to a tape");
  return *a.tape;
}

void require_same_shape(std::string_view op, Var a, Var b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor av = a.value(), bv = b.value();
  Tensor out = kernels::matmul(av, bv);
  return tape_of(a).record("matmul", std::move(out), {a, b},
                           [av, bv](const Tensor& g) -> std::vector<Tensor> {
                             return {kernels::matmul(g, kernels::transpose(bv)),
                                     kernels::matmul(kernels::transpose(av), g)};
                           });
}

Var transpose(Var x) {
  return tape_of(x).record("transpose", kernels::transpose(x.value()), {x},
                           [](const Tensor& g) -> std::vector<Tensor> {
                             return {kernels::transpose(g)};
                           });
}

Var softmax_lastdim(Var x) {
  Tensor probs = kernels::softmax_lastdim(x.value());
  return tape_of(x).record("softmax", probs, {x},
                           [probs](const Tensor& g) -> std::vector<Tensor> {
                             return {kernels::softmax_lastdim_backward(probs, g)};
                           });
}

Var conv2d(Var x, Var w, std::optional<Var> bias, kernels::ConvOptions opt) {
  Tensor xv = x.value(), wv = w.value();
  Tensor out = kernels::conv2d(xv, wv, bias ? &bias->value() : nullptr, opt);
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return tape_of(x).record(
      "conv2d", std::move(out), std::move(inputs),
      [xv, wv, opt, has_bias](const Tensor& g) -> std::vector<Tensor> {
        std::vector<Tensor> grads{kernels::conv2d_grad_input(g, wv, xv.shape(), opt),
                                  kernels::conv2d_grad_weight(g, xv, wv.shape(), opt)};
        if (has_bias) grads.push_back(kernels::conv2d_grad_bias(g));
        return grads;
      });
}

Var depthwise_conv2d(Var x, Var w, std::optional<Var> bias, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != 1 || ws[0] != xs[0])
    throw DimensionError("depthwise_conv2d: weight " + shape_str(ws) +
                         " does not match input " + shape_str(xs));
  return conv2d(x, w, bias, {.stride = 1, .pad = pad, .groups = xs[0]});
}

Var row_attention(Var q, Var k, Var v) {
  Tensor qv = q.value(), kv = k.value(), vv = v.value();
  kernels::AttentionForward fwd = kernels::row_attention(qv, kv, vv);
  Tensor probs = std::move(fwd.probs);
  return tape_of(q).record(
      "row_attention", std::move(fwd.out), {q, k, v},
      [qv, kv, vv, probs](const Tensor& g) -> std::vector<Tensor> {
        kernels::AttentionGrads ag = kernels::row_attention_backward(qv, kv, vv, probs, g);
        return {std::move(ag.dq), std::move(ag.dk), std::move(ag.dv)};
      });
}

Var col_attention(Var q, Var k, Var v) {
  return transpose(row_attention(transpose(q), transpose(k), transpose(v)));
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  return tape_of(a).record("add", zip(a.value(), b.value(), std::plus<>()), {a, b},
                           [](const Tensor& g) -> std::vector<Tensor> { return {g, g}; });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  return tape_of(a).record("sub", zip(a.value(), b.value(), std::minus<>()), {a, b},
                           [](const Tensor& g) -> std::vector<Tensor> {
                             return {g, map(g, [](double x) { return -x; })};
                           });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor av = a.value(), bv = b.value();
  return tape_of(a).record("mul", zip(av, bv, std::multiplies<>()), {a, b},
                           [av, bv](const Tensor& g) -> std::vector<Tensor> {
                             return {zip(g, bv, std::multiplies<>()),
                                     zip(g, av, std::multiplies<>())};
                           });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  Tensor av = a.value(), bv = b.value();
  return tape_of(a).record("div", zip(av, bv, std::divides<>()), {a, b},
                           [av, bv](const Tensor& g) -> std::vector<Tensor> {
                             Tensor ga(g.shape()), gb(g.shape());
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               ga[i] = g[i] / bv[i];
                               gb[i] = -g[i] * av[i] / (bv[i] * bv[i]);
                             }
                             return {ga, gb};
                           });
}

namespace {

// Ties route the gradient to the first argument.
Var select(std::string_view op, Var a, Var b, bool take_min) {
  require_same_shape(op, a, b);
  Tensor av = a.value(), bv = b.value();
  Tensor out(av.shape());
  std::vector<bool> first(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    first[i] = take_min ? av[i] <= bv[i] : av[i] >= bv[i];
    out[i] = first[i] ? av[i] : bv[i];
  }
  return tape_of(a).record(op, std::move(out), {a, b},
                           [first](const Tensor& g) -> std::vector<Tensor> {
                             Tensor ga(g.shape()), gb(g.shape());
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (first[i] ? ga : gb)[i] = g[i];
                             return {ga, gb};
                           });
}

}  // namespace

Var minimum(Var a, Var b) { return select("minimum", a, b, true); }
Var maximum(Var a, Var b) { return select("maximum", a, b, false); }

Var scale(Var x, double s) {
  return tape_of(x).record("scale", map(x.value(), [s](double v) { return v * s; }), {x},
                           [s](const Tensor& g) -> std::vector<Tensor> {
                             return {map(g, [s](double v) { return v * s; })};
                           });
}

Var add_scalar(Var x, double s) {
  return tape_of(x).record("add_scalar", map(x.value(), [s](double v) { return v + s; }), {x},
                           [](const Tensor& g) -> std::vector<Tensor> { return {g}; });
}

Var square(Var x) {
  Tensor xv = x.value();
  return tape_of(x).record("square", map(xv, [](double v) { return v * v; }), {x},
                           [xv](const Tensor& g) -> std::vector<Tensor> {
                             return {zip(g, xv, [](double gi, double v) { return 2.0 * v * gi; })};
                           });
}

Var sigmoid(Var x) {
  Tensor s = map(x.value(), sigmoid_scalar);
  return tape_of(x).record("sigmoid", s, {x}, [s](const Tensor& g) -> std::vector<Tensor> {
    return {zip(g, s, [](double gi, double si) { return gi * si * (1.0 - si); })};
  });
}

Var silu(Var x) {
  Tensor xv = x.value();
  return tape_of(x).record(
      "silu", map(xv, [](double v) { return v * sigmoid_scalar(v); }), {x},
      [xv](const Tensor& g) -> std::vector<Tensor> {
        return {zip(g, xv, [](double gi, double v) {
          const double s = sigmoid_scalar(v);
          return gi * s * (1.0 + v * (1.0 - s));
        })};
      });
}

Var atan(Var x) {
  Tensor xv = x.value();
  return tape_of(x).record("atan", map(xv, [](double v) { return std::atan(v); }), {x},
                           [xv](const Tensor& g) -> std::vector<Tensor> {
                             return {zip(g, xv, [](double gi, double v) {
                               return gi / (1.0 + v * v);
                             })};
                           });
}

Var sum(Var x) {
  Shape s = x.shape();
  return tape_of(x).record("sum", Tensor::scalar(x.value().sum()), {x},
                           [s](const Tensor& g) -> std::vector<Tensor> { return {Tensor(s, g[0])}; });
}

Var mean(Var x) {
  Shape s = x.shape();
  const double n = static_cast<double>(x.value().size());
  return tape_of(x).record("mean", Tensor::scalar(x.value().sum() / n), {x},
                           [s, n](const Tensor& g) -> std::vector<Tensor> {
                             return {Tensor(s, g[0] / n)};
                           });
}

Var reshape(Var x, Shape shape) {
  Shape original = x.shape();
  return tape_of(x).record("reshape", x.value().reshaped(std::move(shape)), {x},
                           [original](const Tensor& g) -> std::vector<Tensor> {
                             return {g.reshaped(original)};
                           });
}

Var gather(Var x, std::vector<std::size_t> indices, Shape shape) {
  const Tensor& xv = x.value();
  if (shape_numel(shape) != indices.size())
    throw DimensionError("gather: " + std::to_string(indices.size()) +
                         " indices for shape " + shape_str(shape));
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size())
      throw DimensionError("gather: index " + std::to_string(indices[i]) + " out of range " +
                           xv.shape_str());
    out[i] = xv[indices[i]];
  }
  Shape src = xv.shape();
  return tape_of(x).record("gather", std::move(out), {x},
                           [src, indices = std::move(indices)](const Tensor& g) -> std::vector<Tensor> {
                             Tensor gx(src);
                             for (std::size_t i = 0; i < indices.size(); ++i) gx[indices[i]] += g[i];
                             return {gx};
                           });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape shape = parts.front().shape();
  std::vector<std::size_t> leading;
  std::vector<double> data;
  for (Var p : parts) {
    const Shape& s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1))
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(shape));
    leading.push_back(s[0]);
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  shape[0] = 0;
  for (std::size_t l : leading) shape[0] += l;
  std::vector<Shape> shapes;
  for (Var p : parts) shapes.push_back(p.shape());
  return tape_of(parts.front())
      .record("concat", Tensor(shape, std::move(data)), parts,
              [shapes](const Tensor& g) -> std::vector<Tensor> {
                std::vector<Tensor> out;
                std::size_t offset = 0;
                for (const Shape& s : shapes) {
                  const std::size_t n = shape_numel(s);
                  out.emplace_back(s, std::vector<double>(g.data().begin() + offset,
                                                          g.data().begin() + offset + n));
                  offset += n;
                }
                return out;
              });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& xv = logits.value();
  if (!xv.same_shape(targets))
    throw DimensionError("bce_with_logits: logits " + xv.shape_str() + " vs targets " +
                         targets.shape_str());
  // max(x,0) - x*y + log(1 + exp(-|x|))
  Tensor out = zip(xv, targets, [](double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  });
  Tensor xs = xv;
  return tape_of(logits).record("bce_with_logits", std::move(out), {logits},
                                [xs, targets](const Tensor& g) -> std::vector<Tensor> {
                                  Tensor gx(xs.shape());
                                  for (std::size_t i = 0; i < xs.size(); ++i)
                                    gx[i] = g[i] * (sigmoid_scalar(xs[i]) - targets[i]);
                                  return {gx};
                                });
}

}  // namespace lfdet::ad
