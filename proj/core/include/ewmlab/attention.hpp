#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ewmlab/params.hpp"
#include "ewmlab/tensor.hpp"

namespace ewmlab {

struct AttentionMask {
  // Query i may only see keys j <= i (self-attention).
  bool causal = false;
  // Per-key validity; empty means every key is valid.
  std::vector<std::uint8_t> key_valid;
};

struct AttentionResult {
  Tensor out;      // [q x d]
  Tensor weights;  // [heads x q x m], detached
};

// Scaled dot-product attention, heads taken as contiguous column groups of
// q/k/v. Throws ContractError if a query row has no visible key.
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::size_t heads, const AttentionMask& mask = {});

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct AttentionProjections {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

// One Pre-LN cross-attention layer:
//   h   = x + Attn(LN_q(x), LN_kv(memory))
//   out = h + FFN(LN_ff(h))
struct CrossAttentionLayerParams {
  LayerNormParams ln_q, ln_kv, ln_ff;
  AttentionProjections attn;
  FeedForwardParams ffn;
};

struct CrossAttentionBlockParams {
  std::vector<CrossAttentionLayerParams> layers;
  std::size_t heads = 1;
};

struct CrossAttentionOutput {
  Tensor out;        // [q x d]
  Tensor attention;  // last layer weights, [heads x q x m]
};

CrossAttentionOutput cross_attention_block(const Tensor& queries, const Tensor& memory,
                                           const CrossAttentionBlockParams& params);

LayerNormParams register_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t d);
AttentionProjections register_attention(ParameterStore& store, const std::string& prefix, std::size_t d);
FeedForwardParams register_ffn(ParameterStore& store, const std::string& prefix, std::size_t d,
                               std::size_t hidden);
CrossAttentionBlockParams register_cross_attention_block(ParameterStore& store, const std::string& prefix,
                                                         std::size_t d, std::size_t heads,
                                                         std::size_t layers);

Tensor apply_layer_norm(const Tensor& x, const LayerNormParams& ln);
Tensor apply_ffn(const Tensor& x, const FeedForwardParams& ffn);

}  // namespace ewmlab
