#pragma once

// Reverse-mode differentiation over a linear tape. Each recorded node keeps
// its forward value and a closure holding whatever activations its gradient
// needs (saved by value). Node ids are assigned in execution order, so the
// backward sweep is a plain reverse scan.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfdet/kernels.hpp"
#include "lfdet/tensor.hpp"

namespace lfdet::ad {

class Tape;

/// Handle to a tensor recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Gradients {
 public:
  /// d(seed . output)/d(v); zeros when v does not influence the output.
  Tensor wrt(Var v) const;
  bool reached(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }
  /// Node ids whose backward closure ran, in the order they ran.
  const std::vector<std::size_t>& visit_order() const { return order_; }

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> order_;
};

class Tape {
 public:
  /// Returns one gradient per input (an empty Tensor means "no contribution").
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, std::string_view name = "leaf");
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  bool is_leaf(std::size_t id) const { return !nodes_.at(id).backward; }

  Gradients backward(Var output, const Tensor& seed) const;
  /// Seeds with ones; intended for scalar losses.
  Gradients backward(Var output) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable primitives. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var x);
Var softmax_lastdim(Var x);
Var conv2d(Var x, Var w, std::optional<Var> bias, kernels::ConvOptions opt);
Var depthwise_conv2d(Var x, Var w, std::optional<Var> bias, std::size_t pad);
Var row_attention(Var q, Var k, Var v);
Var col_attention(Var q, Var k, Var v);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var square(Var x);
Var sigmoid(Var x);
Var silu(Var x);
Var atan(Var x);
Var sum(Var x);
Var mean(Var x);
Var reshape(Var x, Shape shape);
/// out[i] = x.flat[indices[i]], reshaped to `shape`.
Var gather(Var x, std::vector<std::size_t> indices, Shape shape);
/// Concatenation along axis 0.
Var concat(const std::vector<Var>& parts);
/// Elementwise binary cross-entropy of sigmoid(logits) against fixed targets.
Var bce_with_logits(Var logits, const Tensor& targets);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

}  // namespace lfdet::ad
