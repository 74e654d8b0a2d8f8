#pragma once

// Local feature superimposed self-attention.
//
//   Q, K, V   = 1x1 convs of X (no bias)
//   F_row[i]  = Softmax(Q_i K_i^T / sqrt(W)) V_i                 per channel i
//   F_col[i]  = (Softmax(Q_i^T K_i / sqrt(H)) V_i^T)^T
//   out       = X + DW7(Conv1(F_row)) + DW7(Conv1(F_col))
//
// Softmax normalizes over the key index (last axis of the score matrix).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lfdet/autograd.hpp"
#include "lfdet/cost.hpp"
#include "lfdet/random.hpp"
#include "lfdet/tensor.hpp"

namespace lfdet {

inline constexpr std::size_t kDepthwiseKernel = 7;
inline constexpr std::size_t kDepthwisePad = 3;

struct LfsaParams {
  std::size_t channels = 0;
  Tensor wq, wk, wv;           // [C,C,1,1]
  Tensor w_row, b_row;         // [C,C,1,1], [C]
  Tensor w_col, b_col;
  Tensor dw_row, db_row;       // [C,1,7,7], [C]
  Tensor dw_col, db_col;

  /// Q/K/V uniform in [-1/sqrt(C), 1/sqrt(C)], output 1x1 convs zero,
  /// depthwise kernels delta, all biases zero. The layer starts as the identity.
  static LfsaParams init(std::size_t channels, Rng& rng);
  /// Every tensor uniform in [-scale, scale]; used by gradient checks.
  static LfsaParams random(std::size_t channels, Rng& rng, double scale = 0.5);

  /// Throws DimensionError on any shape inconsistency.
  void validate() const;

  struct Group {
    std::string name;
    Tensor* tensor;
  };
  std::vector<Group> groups();
};

struct LfsaVars {
  ad::Var wq, wk, wv;
  ad::Var w_row, b_row, w_col, b_col;
  ad::Var dw_row, db_row, dw_col, db_col;

  static LfsaVars record(ad::Tape& tape, const LfsaParams& p);
  std::vector<ad::Var> all() const;
};

/// Softmax(Q K^T / sqrt(W)) V on single-channel [H,W] maps.
Tensor row_attention(const Tensor& q, const Tensor& k, const Tensor& v);
/// (Softmax(Q^T K / sqrt(H)) V^T)^T on single-channel [H,W] maps.
Tensor col_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct LfsaBranches {
  Tensor q, k, v;
  Tensor f_row, f_col;  // attention outputs before the conv stacks
};

/// Projections and per-channel attention only (no conv stacks, no residual).
LfsaBranches lfsa_attention_stage(const Tensor& x, const LfsaParams& params);

Tensor lfsa_forward(const Tensor& x, const LfsaParams& params);
ad::Var lfsa_forward(ad::Var x, const LfsaVars& params);

/// Scalar-loop reference of the whole layer. Slow; shares no kernels with lfsa_forward.
Tensor lfsa_oracle(const Tensor& x, const LfsaParams& params);

/// Attention-stage MACs: score and value products in both orientations, 2C(H^2 W + W^2 H).
std::uint64_t lfsa_attention_macs(std::size_t c, std::size_t h, std::size_t w);
/// Attention-stage MACs of full token self-attention over HW tokens of width C: 2 (HW)^2 C.
std::uint64_t full_attention_macs(std::size_t c, std::size_t h, std::size_t w);

/// The layer's convolutions (Q/K/V, output 1x1, depthwise) as a LayerGraph.
LayerGraph lfsa_conv_graph(std::size_t c, std::size_t h, std::size_t w);

/// Parameters and MACs of one layer: conv graph plus the attention matmuls.
LayerCost lfsa_cost(std::size_t c, std::size_t h, std::size_t w);

}  // namespace lfdet
