#pragma once

// Forward and gradient kernels on plain tensors. Loops are parallelized with
// OpenMP over independent outputs only (rows, output channels, attention
// channels); every output element is reduced by one thread in a fixed order,
// so results are bit-identical for any thread count.

#include <cstddef>

#include "lfdet/tensor.hpp"

namespace lfdet::kernels {

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
};

/// Output extent of a convolution along one axis; throws DimensionError if < 1.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose(const Tensor& x);

/// Softmax over the last axis with max subtraction.
Tensor softmax_lastdim(const Tensor& x);
Tensor softmax_lastdim_backward(const Tensor& probs, const Tensor& grad_out);

/// Cross-correlation of x[Cin,H,W] with w[Cout,Cin/groups,k,k], zero padding.
/// `bias` may be null.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, ConvOptions opt);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape,
                         ConvOptions opt);
Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const Shape& w_shape,
                          ConvOptions opt);
/// Sum of grad_out over spatial positions, one entry per output channel.
Tensor conv2d_grad_bias(const Tensor& grad_out);

/// Per-channel convolution: x[C,H,W] with w[C,1,k,k], stride 1.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t pad);

struct AttentionForward {
  Tensor out;
  Tensor probs;  // [C,H,H] (or [H,H] for rank-2 inputs)
};

struct AttentionGrads {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

/// Softmax(Q K^T / sqrt(W)) V for each channel of [C,H,W] (or a single [H,W] map).
AttentionForward row_attention(const Tensor& q, const Tensor& k, const Tensor& v);
AttentionGrads row_attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const Tensor& probs, const Tensor& grad_out);

/// (Softmax(Q^T K / sqrt(H)) V^T)^T, computed as transpose(row_attention(Q^T, K^T, V^T)).
Tensor col_attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace lfdet::kernels

/// Serial, unoptimized counterparts of the kernels above. Kept as the
/// baseline for tests and benchmarks; nothing on the main path calls them.
namespace lfdet::reference {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_lastdim(const Tensor& x);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
              kernels::ConvOptions opt);
Tensor row_attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace lfdet::reference
