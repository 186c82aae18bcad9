#include "ewmlab/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"

namespace ewmlab {

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::size_t heads, const AttentionMask& mask) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) {
    throw DimensionError("multi_head_attention expects matrices");
  }
  const auto nq = q.dim(0), nk = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != nk) {
    throw DimensionError("multi_head_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ContractError("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  if (!mask.key_valid.empty() && mask.key_valid.size() != nk) {
    throw DimensionError("multi_head_attention: key mask length mismatch");
  }
  check_finite(q, "multi_head_attention");
  check_finite(k, "multi_head_attention");
  check_finite(v, "multi_head_attention");

  const auto dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qd = q.data(), kd = k.data(), vd = v.data();

  auto visible = [&](std::size_t i, std::size_t j) {
    if (mask.causal && j > i) return false;
    return mask.key_valid.empty() || mask.key_valid[j] != 0;
  };
  std::vector<std::uint8_t> allowed(nq * nk);
  for (std::size_t i = 0; i < nq; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < nk; ++j) {
      allowed[i * nk + j] = visible(i, j) ? 1 : 0;
      any = any || allowed[i * nk + j];
    }
    if (!any) throw ContractError("multi_head_attention: query row " + std::to_string(i) + " sees no key");
  }

  std::vector<double> probs(heads * nq * nk, 0.0);
  std::vector<double> out(nq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = h * dh;
    for (std::size_t i = 0; i < nq; ++i) {
      double* p = probs.data() + (h * nq + i) * nk;
      const double* qi = qd.data() + i * d + off;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        if (!allowed[i * nk + j]) continue;
        const double* kj = kd.data() + j * d + off;
        double s = 0.0;
        for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
        p[j] = s * inv_sqrt;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        if (!allowed[i * nk + j]) continue;
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      double* oi = out.data() + i * d + off;
      for (std::size_t j = 0; j < nk; ++j) {
        if (!allowed[i * nk + j]) continue;
        p[j] /= z;
        const double* vj = vd.data() + j * d + off;
        for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
      }
    }
  }

  AttentionResult result;
  result.weights = Tensor({heads, nq, nk}, probs);
  result.out = Tensor({nq, d}, std::move(out));
  const bool track = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  if (track) {
    auto& node = *result.out.node();
    node.requires_grad = true;
    node.parents = {q.node(), k.node(), v.node()};
    node.backward = [nq, nk, d, dh, heads, inv_sqrt, probs = std::move(probs),
                     allowed = std::move(allowed)](detail::Node& self) {
      const double* g = self.grad.data();
      const double* qv = self.parents[0]->data.data();
      const double* kv = self.parents[1]->data.data();
      const double* vv = self.parents[2]->data.data();
      double* gq = self.parents[0]->requires_grad ? self.parents[0]->grad.data() : nullptr;
      double* gk = self.parents[1]->requires_grad ? self.parents[1]->grad.data() : nullptr;
      double* gv = self.parents[2]->requires_grad ? self.parents[2]->grad.data() : nullptr;
      std::vector<double> dp(nk);
      for (std::size_t h = 0; h < heads; ++h) {
        const auto off = h * dh;
        for (std::size_t i = 0; i < nq; ++i) {
          const double* p = probs.data() + (h * nq + i) * nk;
          const double* gi = g + i * d + off;
          // dP_ij = g_i . v_j ; dV_j += P_ij g_i
          double dot = 0.0;
          for (std::size_t j = 0; j < nk; ++j) {
            if (!allowed[i * nk + j]) {
              dp[j] = 0.0;
              continue;
            }
            const double* vj = vv + j * d + off;
            double s = 0.0;
            for (std::size_t t = 0; t < dh; ++t) s += gi[t] * vj[t];
            dp[j] = s;
            dot += p[j] * s;
            if (gv) {
              double* gvj = gv + j * d + off;
              for (std::size_t t = 0; t < dh; ++t) gvj[t] += p[j] * gi[t];
            }
          }
          const double* qi = qv + i * d + off;
          for (std::size_t j = 0; j < nk; ++j) {
            if (!allowed[i * nk + j]) continue;
            const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
            if (ds == 0.0) continue;
            const double* kj = kv + j * d + off;
            if (gq) {
              double* gqi = gq + i * d + off;
              for (std::size_t t = 0; t < dh; ++t) gqi[t] += ds * kj[t];
            }
            if (gk) {
              double* gkj = gk + j * d + off;
              for (std::size_t t = 0; t < dh; ++t) gkj[t] += ds * qi[t];
            }
          }
        }
      }
    };
  }
  return result;
}

Tensor apply_layer_norm(const Tensor& x, const LayerNormParams& ln) {
  return layer_norm(x, ln.gamma, ln.beta, 1e-5);
}

Tensor apply_ffn(const Tensor& x, const FeedForwardParams& ffn) {
  return linear(gelu(linear(x, ffn.w1, ffn.b1)), ffn.w2, ffn.b2);
}

CrossAttentionOutput cross_attention_block(const Tensor& queries, const Tensor& memory,
                                           const CrossAttentionBlockParams& params) {
  if (!memory.defined() || memory.size() == 0) throw ContractError("cross_attention_block: empty memory");
  if (params.layers.empty()) throw ContractError("cross_attention_block: no layers");
  if (queries.cols() != memory.cols()) {
    throw DimensionError("cross_attention_block: queries " + shape_str(queries.shape()) + " vs memory " +
                         shape_str(memory.shape()));
  }
  CrossAttentionOutput result;
  Tensor x = queries;
  for (const auto& layer : params.layers) {
    const Tensor qn = apply_layer_norm(x, layer.ln_q);
    const Tensor mn = apply_layer_norm(memory, layer.ln_kv);
    const Tensor q = linear(qn, layer.attn.wq, layer.attn.bq);
    const Tensor k = linear(mn, layer.attn.wk, layer.attn.bk);
    const Tensor v = linear(mn, layer.attn.wv, layer.attn.bv);
    auto attn = multi_head_attention(q, k, v, params.heads);
    const Tensor h = add(x, linear(attn.out, layer.attn.wo, layer.attn.bo));
    x = add(h, apply_ffn(apply_layer_norm(h, layer.ln_ff), layer.ffn));
    result.attention = attn.weights;
  }
  result.out = x;
  return result;
}

LayerNormParams register_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t d) {
  return {store.add(prefix + ".gamma", {d}, InitSpec::constant(1.0), false),
          store.add(prefix + ".beta", {d}, InitSpec::zeros(), false)};
}

AttentionProjections register_attention(ParameterStore& store, const std::string& prefix, std::size_t d) {
  const auto w = InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(d)));
  AttentionProjections p;
  p.wq = store.add(prefix + ".wq", {d, d}, w);
  p.bq = store.add(prefix + ".bq", {d}, InitSpec::zeros(), false);
  p.wk = store.add(prefix + ".wk", {d, d}, w);
  p.bk = store.add(prefix + ".bk", {d}, InitSpec::zeros(), false);
  p.wv = store.add(prefix + ".wv", {d, d}, w);
  p.bv = store.add(prefix + ".bv", {d}, InitSpec::zeros(), false);
  p.wo = store.add(prefix + ".wo", {d, d}, w);
  p.bo = store.add(prefix + ".bo", {d}, InitSpec::zeros(), false);
  return p;
}

FeedForwardParams register_ffn(ParameterStore& store, const std::string& prefix, std::size_t d,
                               std::size_t hidden) {
  FeedForwardParams p;
  p.w1 = store.add(prefix + ".w1", {hidden, d}, InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(d))));
  p.b1 = store.add(prefix + ".b1", {hidden}, InitSpec::zeros(), false);
  p.w2 = store.add(prefix + ".w2", {d, hidden},
                   InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(hidden))));
  p.b2 = store.add(prefix + ".b2", {d}, InitSpec::zeros(), false);
  return p;
}

CrossAttentionBlockParams register_cross_attention_block(ParameterStore& store, const std::string& prefix,
                                                         std::size_t d, std::size_t heads,
                                                         std::size_t layers) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError(prefix + ": width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  CrossAttentionBlockParams block;
  block.heads = heads;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto lp = prefix + ".layer" + std::to_string(l);
    CrossAttentionLayerParams layer;
    layer.ln_q = register_layer_norm(store, lp + ".ln_q", d);
    layer.ln_kv = register_layer_norm(store, lp + ".ln_kv", d);
    layer.attn = register_attention(store, lp + ".attn", d);
    layer.ln_ff = register_layer_norm(store, lp + ".ln_ff", d);
    layer.ffn = register_ffn(store, lp + ".ffn", d, 4 * d);
    block.layers.push_back(std::move(layer));
  }
  return block;
}

}  // namespace ewmlab
