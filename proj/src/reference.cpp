#include <cmath>
#include <cstdint>

#include "lfdet/errors.hpp"
#include "lfdet/kernels.hpp"

namespace lfdet::reference {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
  Tensor out({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.dim(1); ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = x.shape().back();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    double mx = x[r * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[r * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[r * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = std::exp(x[r * n + j] - mx) / z;
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
              kernels::ConvOptions opt) {
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (x.rank() != 3 || w.rank() != 4 || cin % opt.groups || cout % opt.groups ||
      w.dim(1) != cin / opt.groups)
    throw DimensionError("reference conv2d: bad shapes " + x.shape_str() + " " + w.shape_str());
  const std::size_t oh = kernels::conv_out_extent(h, k, opt.stride, opt.pad);
  const std::size_t ow = kernels::conv_out_extent(wd, k, opt.stride, opt.pad);
  const std::size_t cin_g = cin / opt.groups, cout_g = cout / opt.groups;
  Tensor out({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t cl = 0; cl < cin_g; ++cl)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto iy = static_cast<std::int64_t>(oy * opt.stride + ky) -
                              static_cast<std::int64_t>(opt.pad);
              const auto ix = static_cast<std::int64_t>(ox * opt.stride + kx) -
                              static_cast<std::int64_t>(opt.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::int64_t>(h) ||
                  ix >= static_cast<std::int64_t>(wd))
                continue;
              acc += w.at(co, cl, ky, kx) * x.at((co / cout_g) * cin_g + cl, iy, ix);
            }
        out.at(co, oy, ox) = acc + (bias ? (*bias)[co] : 0.0);
      }
  return out;
}

Tensor row_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (!q.same_shape(k) || !q.same_shape(v) || q.rank() != 3)
    throw DimensionError("reference row_attention expects matching [C,H,W]");
  const std::size_t c = q.dim(0), h = q.dim(1), w = q.dim(2);
  Tensor out(q.shape());
  std::vector<double> scores(h);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < h; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < w; ++t) dot += q.at(ch, i, t) * k.at(ch, j, t);
        scores[j] = dot / std::sqrt(static_cast<double>(w));
      }
      double mx = scores[0];
      for (double s : scores) mx = std::max(mx, s);
      double z = 0.0;
      for (double s : scores) z += std::exp(s - mx);
      for (std::size_t t = 0; t < w; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < h; ++j) acc += std::exp(scores[j] - mx) / z * v.at(ch, j, t);
        out.at(ch, i, t) = acc;
      }
    }
  return out;
}

}  // namespace lfdet::reference
