#include "lfdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lfdet/errors.hpp"

namespace lfdet {

namespace {

double checked(double v, std::size_t coord) {
  if (!std::isfinite(v))
    throw NumericError("finite difference: non-finite evaluation at coordinate " +
                       std::to_string(coord));
  return v;
}

}  // namespace

Tensor finite_diff_grad_inplace(const std::function<double()>& f, Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite difference step must be positive");
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = checked(f(), i);
    x[i] = orig - eps;
    const double down = checked(f(), i);
    x[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  Tensor probe = x;
  return finite_diff_grad_inplace([&] { return f(probe); }, probe, eps);
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  if (!analytic.same_shape(numeric))
    throw DimensionError("relative_error: " + analytic.shape_str() + " vs " +
                         numeric.shape_str());
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace lfdet
