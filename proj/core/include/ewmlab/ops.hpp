#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ewmlab/tensor.hpp"

namespace ewmlab {

// Label value excluded from the language-modeling loss.
inline constexpr int kIgnoreIndex = -100;

// --- linear algebra -------------------------------------------------------

// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x . W^T + bias, with W stored [out x in]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// --- elementwise and broadcasting ----------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// Adds vector `v` (length = cols) to every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& v);
// Multiplies a tensor by a single-element tensor.
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor gelu(const Tensor& x);

// --- structural -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// Row gather, e.g. an embedding lookup. Repeated indices accumulate gradient.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// --- reductions and normalization ----------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column-wise mean over rows: [r x c] -> [1 x c].
Tensor mean_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Bin i averages rows [floor(i*L/n), max(floor(i*L/n)+1, ceil((i+1)*L/n))).
Tensor adaptive_avg_pool_1d(const Tensor& x, std::size_t n_bins);

// --- losses ----------------------------------------------------------------

Tensor mse_loss(const Tensor& pred, const Tensor& target);
// Mean over rows of 0.5 * (1 - cos(pred_i, target_i)).
Tensor cosine_alignment_loss(const Tensor& pred, const Tensor& target, double eps = 1e-12);

struct CrossEntropyResult {
  Tensor loss;
  std::size_t supervised = 0;  // positions whose label is not kIgnoreIndex
  bool all_ignored = false;
};
// Mean negative log-likelihood of row i of `logits` at class labels[i].
// No shift is applied here; see next_token_targets().
CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise log-softmax values without tape (scoring helper).
std::vector<double> log_softmax_row(const Tensor& logits, std::size_t row);

// Throws NonFiniteError naming `op` if any value of `t` is NaN or Inf.
void check_finite(const Tensor& t, const char* op);

}  // namespace ewmlab
