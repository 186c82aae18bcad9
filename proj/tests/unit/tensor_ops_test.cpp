#include <cmath>
#include <vector>

#include "doctest.h"
#include "ewmlab/errors.hpp"
#include "ewmlab/gradcheck.hpp"
#include "ewmlab/ops.hpp"
#include "helpers.hpp"

using namespace ewmlab;
using test::randn;

TEST_CASE("matmul matches a triple loop") {
  const auto a = randn(5, 7, 1), b = randn(7, 3, 2);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-13));
    }
  const auto bt = randn(3, 7, 3);
  const auto d = matmul_nt(a, bt);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at(i, k) * bt.at(j, k);
      CHECK(d.at(i, j) == doctest::Approx(s).epsilon(1e-13));
    }
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("softmax rows against the closed form") {
  const auto x = Tensor::matrix(2, 3, {1.0, 2.0, 3.0, -1000.0, 0.0, 1000.0});
  const auto s = softmax_rows(x);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s.at(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(s.at(0, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(s.at(1, 2) == doctest::Approx(1.0));
  CHECK(s.at(1, 0) == 0.0);
}

TEST_CASE("adaptive pooling matches the bin oracle for all small sizes") {
  for (std::size_t L = 1; L <= 12; ++L)
    for (std::size_t n = 1; n <= 12; ++n) {
      const auto x = randn(L, 3, 100 * L + n);
      const auto p = adaptive_avg_pool_1d(x, n);
      REQUIRE(p.rows() == n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i * L / n;
        const std::size_t hi = std::max(lo + 1, ((i + 1) * L + n - 1) / n);
        for (std::size_t c = 0; c < 3; ++c) {
          double s = 0;
          for (std::size_t r = lo; r < hi; ++r) s += x.at(r, c);
          CHECK(p.at(i, c) == s / static_cast<double>(hi - lo));
        }
      }
    }
}

TEST_CASE("cross entropy skips ignored labels") {
  const auto logits = randn(4, 5, 7);
  const std::vector<int> labels{2, kIgnoreIndex, 0, kIgnoreIndex};
  const auto r = cross_entropy(logits, labels);
  CHECK(r.supervised == 2);
  double want = 0;
  for (std::size_t row : {0u, 2u}) want -= log_softmax_row(logits, row)[static_cast<std::size_t>(labels[row])];
  CHECK(r.loss.item() == doctest::Approx(want / 2).epsilon(1e-14));

  const std::vector<int> none(4, kIgnoreIndex);
  const auto z = cross_entropy(logits, none);
  CHECK(z.all_ignored);
  CHECK(z.loss.item() == 0.0);
}

TEST_CASE("reverse mode agrees with finite differences on every op") {
  auto a = randn(3, 4, 11, true), b = randn(4, 4, 12, true), g = randn(1, 4, 13, true), bias = randn(1, 4, 14, true);
  auto idx = std::vector<std::size_t>{0, 2, 2};
  std::vector<Tensor> params{a, b, g, bias};
  const auto f = [&] {
    auto h = gelu(linear(a, b, bias));
    h = layer_norm(h, g, bias);
    h = add(h, mul(matmul(softmax_rows(matmul_nt(h, a)), a), scale(matmul(a, b), 0.3)));
    h = add_row(h, mean_rows(h));
    const Tensor parts[] = {h, gather_rows(h, idx)};
    auto cat = concat_rows(parts);
    auto pooled = adaptive_avg_pool_1d(cat, 4);
    auto target = randn(4, 4, 99);
    return add(add(mse_loss(pooled, target), cosine_alignment_loss(pooled, target)),
               scale_by(mean(slice_rows(cat, 1, 3)), sum(g)));
  };
  const auto r = finite_difference_check(f, params);
  CHECK(r.coordinates == 12 + 16 + 4 + 4);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("gradients accumulate and no-grad stops the tape") {
  auto x = Tensor::vector({1.0, 2.0});
  x.set_requires_grad(true);
  sum(scale(x, 3.0)).backward();
  sum(scale(x, 3.0)).backward();
  CHECK(x.grad()[0] == 6.0);
  {
    NoGradGuard guard;
    CHECK_FALSE(scale(x, 2.0).requires_grad());
  }
  CHECK(scale(x, 2.0).requires_grad());
  CHECK_FALSE(x.detach().requires_grad());
}

TEST_CASE("non-finite values are rejected at op boundaries") {
  const auto x = Tensor::vector({1.0, NAN});
  CHECK_THROWS_AS(check_finite(x, "probe"), NonFiniteError);
  CHECK_THROWS_AS(scale(Tensor::vector({INFINITY}), 2.0), NonFiniteError);
}
