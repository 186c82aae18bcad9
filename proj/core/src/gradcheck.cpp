#include "ewmlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ewmlab/errors.hpp"

namespace ewmlab {

GradCheckResult finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                        double eps) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    const Tensor y = f();
    if (y.size() != 1) throw DimensionError("finite_difference_check: f must return a scalar");
    y.backward();
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult result;
  NoGradGuard no_grad;
  auto eval = [&] { return f().item(); };
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto w = params[pi].mutable_data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double x0 = w[j];
      w[j] = x0 + eps;
      const double fp1 = eval();
      w[j] = x0 - eps;
      const double fm1 = eval();
      w[j] = x0 + 2.0 * eps;
      const double fp2 = eval();
      w[j] = x0 - 2.0 * eps;
      const double fm2 = eval();
      w[j] = x0;
      const double numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * eps);
      const double a = analytic[pi][j];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_relative_error = std::max(result.max_relative_error, abs_err / denom);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace ewmlab
