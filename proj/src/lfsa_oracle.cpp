// Explicit scalar loops for every stage of the layer. No kernel from
// kernels.cpp is reused here, so agreement with lfsa_forward is meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lfdet/errors.hpp"
#include "lfdet/lfsa.hpp"

namespace lfdet {

namespace {

using Plane = std::vector<std::vector<double>>;
using Maps = std::vector<Plane>;  // [C][H][W]

Maps to_maps(const Tensor& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Maps m(c, Plane(h, std::vector<double>(w)));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) m[ch][i][j] = x[(ch * h + i) * w + j];
  return m;
}

Maps pointwise(const Maps& x, const Tensor& weight, const Tensor* bias) {
  const std::size_t c = x.size(), h = x[0].size(), w = x[0][0].size();
  Maps out(c, Plane(h, std::vector<double>(w, 0.0)));
  for (std::size_t co = 0; co < c; ++co)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double acc = bias ? (*bias)[co] : 0.0;
        for (std::size_t ci = 0; ci < c; ++ci) acc += weight[co * c + ci] * x[ci][i][j];
        out[co][i][j] = acc;
      }
  return out;
}

Maps depthwise7(const Maps& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t c = x.size();
  const auto h = static_cast<std::int64_t>(x[0].size());
  const auto w = static_cast<std::int64_t>(x[0][0].size());
  Maps out(c, Plane(h, std::vector<double>(w, 0.0)));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        double acc = bias[ch];
        for (std::int64_t dy = -3; dy <= 3; ++dy)
          for (std::int64_t dx = -3; dx <= 3; ++dx) {
            const std::int64_t y = i + dy, xx = j + dx;
            if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
            acc += weight[(ch * 7 + static_cast<std::size_t>(dy + 3)) * 7 +
                          static_cast<std::size_t>(dx + 3)] *
                   x[ch][y][xx];
          }
        out[ch][i][j] = acc;
      }
  return out;
}

// F[i][t] = sum_j softmax_j(sum_s Q[i][s] K[j][s] / sqrt(W)) V[j][t]
Plane row_attend(const Plane& q, const Plane& k, const Plane& v) {
  const std::size_t h = q.size(), w = q[0].size();
  Plane out(h, std::vector<double>(w, 0.0));
  for (std::size_t i = 0; i < h; ++i) {
    std::vector<double> score(h);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < h; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < w; ++t) s += q[i][t] * k[j][t];
      score[j] = s / std::sqrt(static_cast<double>(w));
      mx = std::max(mx, score[j]);
    }
    double z = 0.0;
    for (double& s : score) z += (s = std::exp(s - mx));
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t j = 0; j < h; ++j) out[i][t] += score[j] / z * v[j][t];
  }
  return out;
}

// F[r][a] = sum_b softmax_b(sum_s Q[s][a] K[s][b] / sqrt(H)) V[r][b]
Plane col_attend(const Plane& q, const Plane& k, const Plane& v) {
  const std::size_t h = q.size(), w = q[0].size();
  Plane out(h, std::vector<double>(w, 0.0));
  for (std::size_t a = 0; a < w; ++a) {
    std::vector<double> score(w);
    double mx = -INFINITY;
    for (std::size_t b = 0; b < w; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < h; ++r) s += q[r][a] * k[r][b];
      score[b] = s / std::sqrt(static_cast<double>(h));
      mx = std::max(mx, score[b]);
    }
    double z = 0.0;
    for (double& s : score) z += (s = std::exp(s - mx));
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t b = 0; b < w; ++b) out[r][a] += score[b] / z * v[r][b];
  }
  return out;
}

}  // namespace

Tensor lfsa_oracle(const Tensor& x, const LfsaParams& p) {
  p.validate();
  if (x.rank() != 3 || x.dim(0) != p.channels)
    throw DimensionError("lfsa_oracle: input " + x.shape_str() + " does not match " +
                         std::to_string(p.channels) + " channels");
  const Maps in = to_maps(x);
  const Maps q = pointwise(in, p.wq, nullptr);
  const Maps k = pointwise(in, p.wk, nullptr);
  const Maps v = pointwise(in, p.wv, nullptr);
  Maps f_row(in.size()), f_col(in.size());
  for (std::size_t ch = 0; ch < in.size(); ++ch) {
    f_row[ch] = row_attend(q[ch], k[ch], v[ch]);
    f_col[ch] = col_attend(q[ch], k[ch], v[ch]);
  }
  const Maps row = depthwise7(pointwise(f_row, p.w_row, &p.b_row), p.dw_row, p.db_row);
  const Maps col = depthwise7(pointwise(f_col, p.w_col, &p.b_col), p.dw_col, p.db_col);

  Tensor out(x.shape());
  const std::size_t h = x.dim(1), w = x.dim(2);
  for (std::size_t ch = 0; ch < in.size(); ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out[(ch * h + i) * w + j] = in[ch][i][j] + row[ch][i][j] + col[ch][i][j];
  return out;
}

}  // namespace lfdet
