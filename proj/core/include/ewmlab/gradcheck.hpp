#pragma once

#include <functional>
#include <span>

#include "ewmlab/tensor.hpp"

namespace ewmlab {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients of the scalar `f` with respect to `params`
// against central finite differences, one coordinate at a time. Uses the
// fourth-order central stencil so that truncation error stays far below the
// gradient scale. The relative error denominator is floored at 1e-8.
GradCheckResult finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                        double eps = 1e-4);

}  // namespace ewmlab
