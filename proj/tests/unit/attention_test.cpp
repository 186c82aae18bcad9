#include <cmath>

#include "doctest.h"
#include "ewmlab/attention.hpp"
#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"
#include "helpers.hpp"

using namespace ewmlab;
using test::randn;

TEST_CASE("single-head attention against a direct computation") {
  const auto q = randn(2, 4, 1), k = randn(3, 4, 2), v = randn(3, 4, 3);
  const auto r = multi_head_attention(q, k, v, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    double w[3], z = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += q.at(i, c) * k.at(j, c);
      w[j] = std::exp(s / 2.0);
      z += w[j];
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < 3; ++j) o += w[j] / z * v.at(j, c);
      CHECK(r.out.at(i, c) == doctest::Approx(o).epsilon(1e-13));
    }
  }
}

TEST_CASE("causal attention ignores later positions") {
  const auto x = randn(6, 8, 4);
  auto y = x.clone();
  for (std::size_t c = 0; c < 8; ++c) y.mutable_data()[5 * 8 + c] += 10.0;
  AttentionMask causal{true, {}};
  const auto a = multi_head_attention(x, x, x, 2, causal).out;
  const auto b = multi_head_attention(y, y, y, 2, causal).out;
  for (std::size_t i = 0; i < 5 * 8; ++i) CHECK(a[i] == b[i]);

  AttentionMask pad{false, {1, 1, 1, 1, 1, 0}};
  const auto c = multi_head_attention(x, x, x, 2, pad).out;
  const auto d = multi_head_attention(x, y, y, 2, pad).out;
  for (std::size_t i = 0; i < 5 * 8; ++i) CHECK(c[i] == d[i]);

  AttentionMask none{false, {0, 0, 0, 0, 0, 0}};
  CHECK_THROWS_AS(multi_head_attention(x, x, x, 2, none), ContractError);
}

TEST_CASE("attention weights are row distributions") {
  ParameterStore store(3);
  const auto block = register_cross_attention_block(store, "blk", 8, 2, 2);
  const auto out = cross_attention_block(randn(3, 8, 5), randn(7, 8, 6), block);
  CHECK(out.out.shape() == Shape{3, 8});
  CHECK(out.attention.shape() == Shape{2, 3, 7});
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) s += out.attention[(h * 3 + i) * 7 + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}
