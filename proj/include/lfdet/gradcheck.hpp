#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lfdet/tensor.hpp"

namespace lfdet {

/// Central-difference gradient (f(x+e) - f(x-e)) / 2e, one coordinate at a time.
/// Throws NumericError if any evaluation is non-finite.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

/// Same estimate for a tensor that f reads by reference; x is restored afterwards.
Tensor finite_diff_grad_inplace(const std::function<double()>& f, Tensor& x, double eps);

/// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2); zero when both vanish.
double relative_error(const Tensor& analytic, const Tensor& numeric);

struct GroupError {
  std::string name;
  double rel_error = 0.0;
};

}  // namespace lfdet
