#include "ewmlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ewmlab/errors.hpp"
#include "kernels.hpp"

namespace ewmlab {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Wraps a freshly computed value; records the tape edge only when needed.
template <typename Backward>
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   Backward&& backward) {
  Tensor out(std::move(shape), std::move(data));
  if (any_requires_grad(inputs)) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const Tensor* t : inputs) node.parents.push_back(t->defined() ? t->node() : nullptr);
    node.backward = std::forward<Backward>(backward);
  }
  return out;
}

// Parent gradient buffer, or nullptr when that parent does not need one.
double* grad_of(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return (p && p->requires_grad) ? p->grad.data() : nullptr;
}

const double* data_of(Node& self, std::size_t i) { return self.parents[i]->data.data(); }

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite input value");
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  check_finite(a, "matmul");
  check_finite(b, "matmul");
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = grad_of(self, 0)) kernels::gemm_nt(m, n, k, g, data_of(self, 1), ga);
    if (double* gb = grad_of(self, 1)) kernels::gemm_tn(k, m, n, data_of(self, 0), g, gb);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  check_finite(a, "matmul_nt");
  check_finite(b, "matmul_nt");
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = grad_of(self, 0)) kernels::gemm_nn(m, n, k, g, data_of(self, 1), ga);
    if (double* gb = grad_of(self, 1)) kernels::gemm_tn(n, m, k, g, data_of(self, 0), gb);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_2d(x, "linear");
  require_2d(weight, "linear");
  const auto m = x.dim(0), k = x.dim(1), n = weight.dim(0);
  if (weight.dim(1) != k) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  if (bias.defined() && bias.size() != n) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(n) +
                         " outputs");
  }
  check_finite(x, "linear");
  check_finite(weight, "linear");
  std::vector<double> out(m * n, 0.0);
  if (bias.defined()) {
    check_finite(bias, "linear");
    const double* bv = bias.data().data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv, bv + n, out.begin() + static_cast<long>(i * n));
  }
  kernels::gemm_nt(m, k, n, x.data().data(), weight.data().data(), out.data());
  const bool has_bias = bias.defined();
  return make_result({m, n}, std::move(out), {&x, &weight, &bias}, [m, k, n, has_bias](Node& self) {
    const double* g = self.grad.data();
    if (double* gx = grad_of(self, 0)) kernels::gemm_nn(m, n, k, g, data_of(self, 1), gx);
    if (double* gw = grad_of(self, 1)) kernels::gemm_tn(n, m, k, g, data_of(self, 0), gw);
    if (has_bias) {
      if (double* gb = grad_of(self, 2)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  check_finite(a, "add");
  check_finite(b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto n = self.grad.size();
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* gp = grad_of(self, p))
        for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  check_finite(a, "sub");
  check_finite(b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto n = self.grad.size();
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i];
    if (double* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) gb[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  check_finite(a, "mul");
  check_finite(b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto n = self.grad.size();
    const double* ad = data_of(self, 0);
    const double* bd = data_of(self, 1);
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * bd[i];
    if (double* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * ad[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  check_finite(a, "scale");
  if (!std::isfinite(factor)) throw NonFiniteError("scale: non-finite factor");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  const auto c = a.cols();
  if (v.size() != c) {
    throw DimensionError("add_row: vector " + shape_str(v.shape()) + " for rows of " +
                         shape_str(a.shape()));
  }
  check_finite(a, "add_row");
  check_finite(v, "add_row");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto vd = v.data();
  const auto r = a.rows();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += vd[j];
  return make_result(a.shape(), std::move(out), {&a, &v}, [r, c](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < r * c; ++i) ga[i] += g[i];
    if (double* gv = grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
  check_finite(a, "scale_by");
  check_finite(s, "scale_by");
  const double f = s.item();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= f;
  return make_result(a.shape(), std::move(out), {&a, &s}, [f](Node& self) {
    const auto n = self.grad.size();
    const double* ad = data_of(self, 0);
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += f * self.grad[i];
    if (double* gs = grad_of(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += ad[i] * self.grad[i];
      gs[0] += acc;
    }
  });
}

// Tanh approximation of GELU.
Tensor gelu(const Tensor& x) {
  check_finite(x, "gelu");
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const double* xv = data_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xv[i];
      const double u = kC * (v + kA * v * v * v);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * v * v);
      gx[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {&x}, [](Node& self) {
    if (double* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const auto c = parts.front().cols();
  std::size_t total = 0;
  bool need_grad = false;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    check_finite(p, "concat_rows");
    total += p.rows();
    need_grad = need_grad || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(total * c);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Tensor result({total, c}, std::move(out));
  if (need_grad && grad_enabled()) {
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& p : parts) node.parents.push_back(p.node());
    node.backward = [offsets](Node& self) {
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        double* gp = grad_of(self, i);
        if (!gp) continue;
        const auto n = self.parents[i]->data.size();
        for (std::size_t j = 0; j < n; ++j) gp[j] += self.grad[offsets[i] + j];
      }
    };
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto r = x.rows(), c = x.cols();
  if (begin >= end || end > r) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const auto xd = x.data();
  std::vector<double> out(xd.begin() + static_cast<long>(begin * c), xd.begin() + static_cast<long>(end * c));
  return make_result({end - begin, c}, std::move(out), {&x}, [begin, c](Node& self) {
    if (double* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[begin * c + i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  const auto r = table.rows(), c = table.cols();
  if (indices.empty()) throw ContractError("gather_rows: empty index list");
  for (auto idx : indices) {
    if (idx >= r) {
      throw DimensionError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                           shape_str(table.shape()));
    }
  }
  check_finite(table, "gather_rows");
  const auto td = table.data();
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(td.begin() + static_cast<long>(indices[i] * c), c, out.begin() + static_cast<long>(i * c));
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result({indices.size(), c}, std::move(out), {&table}, [idx = std::move(idx), c](Node& self) {
    double* gt = grad_of(self, 0);
    if (!gt) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gt[idx[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor sum(const Tensor& x) {
  check_finite(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1}, {acc}, {&x}, [](Node& self) {
    if (double* gx = grad_of(self, 0)) {
      const auto n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
  check_finite(x, "mean_rows");
  const auto r = x.rows(), c = x.cols();
  const auto xd = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += xd[i * c + j];
  const double inv = 1.0 / static_cast<double>(r);
  for (auto& v : out) v *= inv;
  return make_result({1, c}, std::move(out), {&x}, [r, c, inv](Node& self) {
    if (double* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += inv * self.grad[j];
  });
}

Tensor softmax_rows(const Tensor& x) {
  check_finite(x, "softmax_rows");
  const auto r = x.rows(), c = x.cols();
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    double* o = out.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {&x}, [r, c](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.data.data() + i * c;
      const double* g = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto r = x.rows(), c = x.cols();
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("layer_norm: affine parameters " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " for rows of " + shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  check_finite(x, "layer_norm");
  check_finite(gamma, "layer_norm");
  check_finite(beta, "layer_norm");
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<double> out(xd.size());
  // Saved per row: normalized values and inverse standard deviation.
  std::vector<double> xhat(xd.size());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[i * c + j] = h;
      out[i * c + j] = h * gd[j] + bd[j];
    }
  }
  return make_result(x.shape(), std::move(out), {&x, &gamma, &beta},
                     [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const double* g = self.grad.data();
                       const double* gam = data_of(self, 1);
                       double* gx = grad_of(self, 0);
                       double* gg = grad_of(self, 1);
                       double* gb = grad_of(self, 2);
                       const double inv_c = 1.0 / static_cast<double>(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         const double* gi = g + i * c;
                         const double* hi = xhat.data() + i * c;
                         if (gg)
                           for (std::size_t j = 0; j < c; ++j) gg[j] += gi[j] * hi[j];
                         if (gb)
                           for (std::size_t j = 0; j < c; ++j) gb[j] += gi[j];
                         if (gx) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dh = gi[j] * gam[j];
                             s1 += dh;
                             s2 += dh * hi[j];
                           }
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dh = gi[j] * gam[j];
                             gx[i * c + j] += inv_std[i] * (dh - inv_c * s1 - hi[j] * inv_c * s2);
                           }
                         }
                       }
                     });
}

Tensor adaptive_avg_pool_1d(const Tensor& x, std::size_t n_bins) {
  const auto len = x.rows(), c = x.cols();
  if (x.size() == 0 || len == 0) throw ContractError("adaptive_avg_pool_1d: empty input");
  if (n_bins == 0) throw ContractError("adaptive_avg_pool_1d: n_bins must be positive");
  check_finite(x, "adaptive_avg_pool_1d");
  std::vector<std::pair<std::size_t, std::size_t>> bins(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    const std::size_t start = (i * len) / n_bins;
    const std::size_t ceil_end = ((i + 1) * len + n_bins - 1) / n_bins;
    bins[i] = {start, std::max(start + 1, ceil_end)};
  }
  const auto xd = x.data();
  std::vector<double> out(n_bins * c, 0.0);
  for (std::size_t i = 0; i < n_bins; ++i) {
    const auto [s, e] = bins[i];
    for (std::size_t t = s; t < e; ++t)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += xd[t * c + j];
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= static_cast<double>(e - s);
  }
  return make_result({n_bins, c}, std::move(out), {&x}, [bins = std::move(bins), c](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const auto [s, e] = bins[i];
      const double inv = 1.0 / static_cast<double>(e - s);
      for (std::size_t t = s; t < e; ++t)
        for (std::size_t j = 0; j < c; ++j) gx[t * c + j] += inv * self.grad[i * c + j];
    }
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  check_finite(pred, "mse_loss");
  check_finite(target, "mse_loss");
  const auto pd = pred.data();
  const auto td = target.data();
  const auto n = pd.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (pd[i] - td[i]) * (pd[i] - td[i]);
  const double inv = 1.0 / static_cast<double>(n);
  return make_result({1}, {acc * inv}, {&pred, &target}, [n, inv](Node& self) {
    const double g = self.grad[0];
    const double* p = data_of(self, 0);
    const double* t = data_of(self, 1);
    if (double* gp = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) gp[i] += 2.0 * inv * g * (p[i] - t[i]);
    if (double* gt = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) gt[i] -= 2.0 * inv * g * (p[i] - t[i]);
  });
}

Tensor cosine_alignment_loss(const Tensor& pred, const Tensor& target, double eps) {
  require_same_shape(pred, target, "cosine_alignment_loss");
  check_finite(pred, "cosine_alignment_loss");
  check_finite(target, "cosine_alignment_loss");
  const auto r = pred.rows(), c = pred.cols();
  const auto pd = pred.data();
  const auto td = target.data();
  // Per row: dot, |p|, |t| and the clamped denominator.
  std::vector<double> dots(r), pn(r), tn(r), den(r);
  double acc = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    double d = 0.0, a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      d += pd[i * c + j] * td[i * c + j];
      a += pd[i * c + j] * pd[i * c + j];
      b += td[i * c + j] * td[i * c + j];
    }
    dots[i] = d;
    pn[i] = std::sqrt(a);
    tn[i] = std::sqrt(b);
    den[i] = std::max(pn[i] * tn[i], eps);
    acc += 0.5 * (1.0 - d / den[i]);
  }
  const double inv_r = 1.0 / static_cast<double>(r);
  return make_result(
      {1}, {acc * inv_r}, {&pred, &target},
      [r, c, inv_r, eps, dots = std::move(dots), pn = std::move(pn), tn = std::move(tn),
       den = std::move(den)](Node& self) {
        const double g = self.grad[0] * (-0.5) * inv_r;
        const double* p = data_of(self, 0);
        const double* t = data_of(self, 1);
        double* gp = grad_of(self, 0);
        double* gt = grad_of(self, 1);
        for (std::size_t i = 0; i < r; ++i) {
          const bool clamped = pn[i] * tn[i] <= eps;
          for (std::size_t j = 0; j < c; ++j) {
            const double pv = p[i * c + j], tv = t[i * c + j];
            // d cos / d p = t/den - dot * p / (|p|^2 den) when the clamp is inactive.
            if (gp) {
              double d = tv / den[i];
              if (!clamped && pn[i] > 0.0) d -= dots[i] * pv / (pn[i] * pn[i] * den[i]);
              gp[i * c + j] += g * d;
            }
            if (gt) {
              double d = pv / den[i];
              if (!clamped && tn[i] > 0.0) d -= dots[i] * tv / (tn[i] * tn[i] * den[i]);
              gt[i * c + j] += g * d;
            }
          }
        }
      });
}

CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const auto r = logits.rows(), v = logits.cols();
  if (labels.size() != r) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  check_finite(logits, "cross_entropy");
  const auto ld = logits.data();
  std::vector<double> probs(r * v, 0.0);
  std::size_t count = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const int y = labels[i];
    if (y == kIgnoreIndex) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw DimensionError("cross_entropy: label " + std::to_string(y) + " outside vocabulary of " +
                           std::to_string(v));
    }
    const double* row = ld.data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += (probs[i * v + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    acc -= row[y] - mx - std::log(z);
    ++count;
  }
  CrossEntropyResult result;
  result.supervised = count;
  result.all_ignored = (count == 0);
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  std::vector<int> ys(labels.begin(), labels.end());
  result.loss = make_result({1}, {acc * inv}, {&logits},
                            [r, v, inv, probs = std::move(probs), ys = std::move(ys)](Node& self) {
                              double* gl = grad_of(self, 0);
                              if (!gl) return;
                              const double g = self.grad[0] * inv;
                              for (std::size_t i = 0; i < r; ++i) {
                                if (ys[i] == kIgnoreIndex) continue;
                                for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += g * probs[i * v + j];
                                gl[i * v + static_cast<std::size_t>(ys[i])] -= g;
                              }
                            });
  return result;
}

std::vector<double> log_softmax_row(const Tensor& logits, std::size_t row) {
  const auto v = logits.cols();
  if (row >= logits.rows()) throw DimensionError("log_softmax_row: row out of range");
  const double* x = logits.data().data() + row * v;
  const double mx = *std::max_element(x, x + v);
  double z = 0.0;
  for (std::size_t j = 0; j < v; ++j) z += std::exp(x[j] - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = x[j] - lz;
  return out;
}

}  // namespace ewmlab
