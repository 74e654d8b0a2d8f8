#include "lfdet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lfdet/errors.hpp"

namespace lfdet::kernels {

using idx = std::int64_t;

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
  if (stride == 0) throw DimensionError("conv stride must be positive");
  const auto span = static_cast<idx>(in + 2 * pad) - static_cast<idx>(kernel);
  if (span < 0)
    throw DimensionError("conv output extent non-positive: in=" + std::to_string(in) +
                         " k=" + std::to_string(kernel) + " pad=" + std::to_string(pad));
  return static_cast<std::size_t>(span) / stride + 1;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() == 2) {
    const std::size_t h = x.dim(0), w = x.dim(1);
    Tensor out({w, h});
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(j, i) = x.at(i, j);
    return out;
  }
  if (x.rank() == 3) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, w, h});
#pragma omp parallel for schedule(static)
    for (idx ch = 0; ch < static_cast<idx>(c); ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(ch, j, i) = x.at(ch, i, j);
    return out;
  }
  throw DimensionError("transpose expects rank 2 or 3, got " + x.shape_str());
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = x.shape().back();
  if (n == 0) throw DimensionError("softmax over empty last dimension");
  const std::size_t rows = x.size() / n;
  Tensor out(x.shape());
  const double* px = x.ptr();
  double* po = out.ptr();
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const double* in = px + r * n;
    double* o = po + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return out;
}

Tensor softmax_lastdim_backward(const Tensor& probs, const Tensor& grad_out) {
  if (!probs.same_shape(grad_out))
    throw DimensionError("softmax backward: " + probs.shape_str() + " vs " +
                         grad_out.shape_str());
  const std::size_t n = probs.shape().back();
  const std::size_t rows = probs.size() / n;
  Tensor out(probs.shape());
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const double* p = probs.ptr() + r * n;
    const double* g = grad_out.ptr() + r * n;
    double* o = out.ptr() + r * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += g[j] * p[j];
    for (std::size_t j = 0; j < n; ++j) o[j] = p[j] * (g[j] - dot);
  }
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, cout, cin_g, cout_g, k, oh, ow;
};

ConvGeometry check_conv(const Shape& x, const Shape& w, ConvOptions opt) {
  if (x.size() != 3) throw DimensionError("conv2d input must be [C,H,W], got " + shape_str(x));
  if (w.size() != 4)
    throw DimensionError("conv2d weight must be [Cout,Cin/g,k,k], got " + shape_str(w));
  if (opt.groups == 0 || x[0] % opt.groups != 0 || w[0] % opt.groups != 0)
    throw DimensionError("conv2d: channels " + std::to_string(x[0]) + "->" +
                         std::to_string(w[0]) + " not divisible by groups " +
                         std::to_string(opt.groups));
  if (w[1] != x[0] / opt.groups)
    throw DimensionError("conv2d: weight " + shape_str(w) + " does not match input " +
                         shape_str(x) + " with groups " + std::to_string(opt.groups));
  if (w[2] != w[3] || w[2] % 2 == 0)
    throw DimensionError("conv2d: kernel must be square and odd, got " + shape_str(w));
  ConvGeometry g{};
  g.cin = x[0];
  g.h = x[1];
  g.w = x[2];
  g.cout = w[0];
  g.cin_g = w[1];
  g.cout_g = w[0] / opt.groups;
  g.k = w[2];
  g.oh = conv_out_extent(g.h, g.k, opt.stride, opt.pad);
  g.ow = conv_out_extent(g.w, g.k, opt.stride, opt.pad);
  return g;
}

bool is_pointwise(const ConvGeometry& g, ConvOptions opt) {
  return g.k == 1 && opt.stride == 1 && opt.pad == 0 && opt.groups == 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, ConvOptions opt) {
  const ConvGeometry g = check_conv(x.shape(), w.shape(), opt);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout))
    throw DimensionError("conv2d: bias " + bias->shape_str() + " does not match " +
                         std::to_string(g.cout) + " output channels");
  Tensor out({g.cout, g.oh, g.ow});

  if (is_pointwise(g, opt)) {
    // [Cout,Cin] x [Cin,HW]; same reduction order as the general loop.
    out = matmul(w.reshaped({g.cout, g.cin}), x.reshaped({g.cin, g.h * g.w}))
              .reshaped({g.cout, g.oh, g.ow});
  } else {
    const auto s = static_cast<idx>(opt.stride);
    const auto p = static_cast<idx>(opt.pad);
    const auto k = static_cast<idx>(g.k);
#pragma omp parallel for schedule(static)
    for (idx co = 0; co < static_cast<idx>(g.cout); ++co) {
      const std::size_t grp = static_cast<std::size_t>(co) / g.cout_g;
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = 0.0;
          for (std::size_t cl = 0; cl < g.cin_g; ++cl) {
            const std::size_t ci = grp * g.cin_g + cl;
            for (idx ky = 0; ky < k; ++ky) {
              const idx iy = static_cast<idx>(oy) * s + ky - p;
              if (iy < 0 || iy >= static_cast<idx>(g.h)) continue;
              for (idx kx = 0; kx < k; ++kx) {
                const idx ix = static_cast<idx>(ox) * s + kx - p;
                if (ix < 0 || ix >= static_cast<idx>(g.w)) continue;
                acc += w.at(co, cl, ky, kx) * x.at(ci, iy, ix);
              }
            }
          }
          out.at(co, oy, ox) = acc;
        }
      }
    }
  }
  if (bias) {
    const std::size_t plane = g.oh * g.ow;
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t i = 0; i < plane; ++i) out[co * plane + i] += (*bias)[co];
  }
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape,
                         ConvOptions opt) {
  const ConvGeometry g = check_conv(x_shape, w.shape(), opt);
  if (grad_out.shape() != Shape{g.cout, g.oh, g.ow})
    throw DimensionError("conv2d grad_input: grad " + grad_out.shape_str() +
                         " does not match output extents");
  Tensor dx(x_shape);
  const auto s = static_cast<idx>(opt.stride);
  const auto p = static_cast<idx>(opt.pad);
  const auto k = static_cast<idx>(g.k);
#pragma omp parallel for schedule(static)
  for (idx ci = 0; ci < static_cast<idx>(g.cin); ++ci) {
    const std::size_t grp = static_cast<std::size_t>(ci) / g.cin_g;
    const std::size_t cl = static_cast<std::size_t>(ci) % g.cin_g;
    for (std::size_t co = grp * g.cout_g; co < (grp + 1) * g.cout_g; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double go = grad_out.at(co, oy, ox);
          for (idx ky = 0; ky < k; ++ky) {
            const idx iy = static_cast<idx>(oy) * s + ky - p;
            if (iy < 0 || iy >= static_cast<idx>(g.h)) continue;
            for (idx kx = 0; kx < k; ++kx) {
              const idx ix = static_cast<idx>(ox) * s + kx - p;
              if (ix < 0 || ix >= static_cast<idx>(g.w)) continue;
              dx.at(ci, iy, ix) += go * w.at(co, cl, ky, kx);
            }
          }
        }
      }
    }
  }
  return dx;
}

Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const Shape& w_shape,
                          ConvOptions opt) {
  const ConvGeometry g = check_conv(x.shape(), w_shape, opt);
  if (grad_out.shape() != Shape{g.cout, g.oh, g.ow})
    throw DimensionError("conv2d grad_weight: grad " + grad_out.shape_str() +
                         " does not match output extents");
  Tensor dw(w_shape);
  const auto s = static_cast<idx>(opt.stride);
  const auto p = static_cast<idx>(opt.pad);
  const auto k = static_cast<idx>(g.k);
#pragma omp parallel for schedule(static)
  for (idx co = 0; co < static_cast<idx>(g.cout); ++co) {
    const std::size_t grp = static_cast<std::size_t>(co) / g.cout_g;
    for (std::size_t cl = 0; cl < g.cin_g; ++cl) {
      const std::size_t ci = grp * g.cin_g + cl;
      for (idx ky = 0; ky < k; ++ky) {
        for (idx kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const idx iy = static_cast<idx>(oy) * s + ky - p;
            if (iy < 0 || iy >= static_cast<idx>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const idx ix = static_cast<idx>(ox) * s + kx - p;
              if (ix < 0 || ix >= static_cast<idx>(g.w)) continue;
              acc += grad_out.at(co, oy, ox) * x.at(ci, iy, ix);
            }
          }
          dw.at(co, cl, ky, kx) = acc;
        }
      }
    }
  }
  return dw;
}

Tensor conv2d_grad_bias(const Tensor& grad_out) {
  if (grad_out.rank() != 3) throw DimensionError("conv2d grad_bias expects [C,H,W]");
  const std::size_t c = grad_out.dim(0), plane = grad_out.dim(1) * grad_out.dim(2);
  Tensor db({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += grad_out[ch * plane + i];
    db[ch] = acc;
  }
  return db;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != 1 || w.dim(0) != x.dim(0))
    throw DimensionError("depthwise_conv2d: weight " + w.shape_str() +
                         " does not match input " + x.shape_str());
  return conv2d(x, w, bias, {.stride = 1, .pad = pad, .groups = x.dim(0)});
}

namespace {

void check_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (!q.same_shape(k) || !q.same_shape(v) || (q.rank() != 2 && q.rank() != 3))
    throw DimensionError("attention: Q " + q.shape_str() + ", K " + k.shape_str() + ", V " +
                         v.shape_str() + " must share shape [H,W] or [C,H,W]");
}

}  // namespace

AttentionForward row_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_attention(q, k, v);
  const bool batched = q.rank() == 3;
  const std::size_t c = batched ? q.dim(0) : 1;
  const std::size_t h = q.dim(q.rank() - 2), w = q.dim(q.rank() - 1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w));
  AttentionForward res{Tensor(q.shape()), Tensor(batched ? Shape{c, h, h} : Shape{h, h})};
  const std::size_t plane = h * w;

#pragma omp parallel for schedule(static)
  for (idx ch = 0; ch < static_cast<idx>(c); ++ch) {
    const double* qc = q.ptr() + ch * plane;
    const double* kc = k.ptr() + ch * plane;
    const double* vc = v.ptr() + ch * plane;
    double* pc = res.probs.ptr() + ch * h * h;
    double* oc = res.out.ptr() + ch * plane;
    for (std::size_t i = 0; i < h; ++i) {
      double* prow = pc + i * h;
      for (std::size_t j = 0; j < h; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < w; ++t) dot += qc[i * w + t] * kc[j * w + t];
        prow[j] = dot * scale;
      }
      const double mx = *std::max_element(prow, prow + h);
      double z = 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        z += prow[j];
      }
      for (std::size_t j = 0; j < h; ++j) prow[j] /= z;
      double* orow = oc + i * w;
      for (std::size_t j = 0; j < h; ++j) {
        const double pij = prow[j];
        for (std::size_t t = 0; t < w; ++t) orow[t] += pij * vc[j * w + t];
      }
    }
  }
  return res;
}

AttentionGrads row_attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const Tensor& probs, const Tensor& grad_out) {
  check_attention(q, k, v);
  if (!grad_out.same_shape(q))
    throw DimensionError("row_attention backward: grad " + grad_out.shape_str() +
                         " vs " + q.shape_str());
  const bool batched = q.rank() == 3;
  const std::size_t c = batched ? q.dim(0) : 1;
  const std::size_t h = q.dim(q.rank() - 2), w = q.dim(q.rank() - 1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w));
  const std::size_t plane = h * w;
  AttentionGrads g{Tensor(q.shape()), Tensor(q.shape()), Tensor(q.shape())};

#pragma omp parallel for schedule(static)
  for (idx ch = 0; ch < static_cast<idx>(c); ++ch) {
    const double* qc = q.ptr() + ch * plane;
    const double* kc = k.ptr() + ch * plane;
    const double* vc = v.ptr() + ch * plane;
    const double* pc = probs.ptr() + ch * h * h;
    const double* gc = grad_out.ptr() + ch * plane;
    double* dq = g.dq.ptr() + ch * plane;
    double* dk = g.dk.ptr() + ch * plane;
    double* dv = g.dv.ptr() + ch * plane;
    std::vector<double> ds(h * h);
    for (std::size_t i = 0; i < h; ++i) {
      double* dsrow = ds.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) {
        double dp = 0.0;
        for (std::size_t t = 0; t < w; ++t) dp += gc[i * w + t] * vc[j * w + t];
        dsrow[j] = dp;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < h; ++j) dot += dsrow[j] * pc[i * h + j];
      for (std::size_t j = 0; j < h; ++j) dsrow[j] = pc[i * h + j] * (dsrow[j] - dot) * scale;
    }
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        const double pij = pc[i * h + j];
        const double sij = ds[i * h + j];
        for (std::size_t t = 0; t < w; ++t) {
          dv[j * w + t] += pij * gc[i * w + t];
          dq[i * w + t] += sij * kc[j * w + t];
          dk[j * w + t] += sij * qc[i * w + t];
        }
      }
  }
  return g;
}

Tensor col_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_attention(q, k, v);
  return transpose(row_attention(transpose(q), transpose(k), transpose(v)).out);
}

}  // namespace lfdet::kernels
