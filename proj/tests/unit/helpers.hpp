#pragma once

#include <cstddef>
#include <vector>

#include "ewmlab/random.hpp"
#include "ewmlab/tensor.hpp"

namespace ewmlab::test {

inline Tensor randn(std::size_t rows, std::size_t cols, std::uint64_t seed, bool grad = false, double std = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, std);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor({rows, cols}, std::move(v), grad);
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace ewmlab::test
