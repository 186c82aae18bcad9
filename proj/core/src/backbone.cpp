#include "ewmlab/backbone.hpp"

#include <cmath>

#include "ewmlab/errors.hpp"

namespace ewmlab {

const char* role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::Video: return "video";
    case Role::Audio: return "audio";
    case Role::Subtitle: return "subtitle";
    case Role::Question: return "question";
    case Role::Answer: return "answer";
    case Role::Belief: return "belief";
    case Role::Pad: return "pad";
  }
  return "?";
}

std::optional<std::pair<std::size_t, std::size_t>> TokenSequence::region(Role role) const {
  std::optional<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] != role) continue;
    if (!out) out = std::make_pair(i, i + 1);
    else out->second = i + 1;
  }
  return out;
}

TokenSequence assemble_template(const TemplateInputs& inputs, std::size_t max_seq_len) {
  TokenSequence seq;
  auto push = [&](Role role, const std::vector<int>& ids) {
    for (int id : ids) {
      seq.ids.push_back(id);
      seq.roles.push_back(role);
    }
  };
  push(Role::System, {Vocabulary::kBos, Vocabulary::kSystem});
  push(Role::Video, inputs.video);
  push(Role::Audio, inputs.audio);
  push(Role::Subtitle, inputs.subtitle);
  push(Role::Question, inputs.question);
  push(Role::Answer, inputs.answer);
  if (seq.size() > max_seq_len) {
    throw ContractError("assemble_template: sequence of " + std::to_string(seq.size()) +
                        " tokens exceeds max_seq_len " + std::to_string(max_seq_len));
  }
  return seq;
}

void ThinkerConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ConfigError("thinker: d_model " + std::to_string(d_model) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (layers == 0 || vocab_size == 0 || max_seq_len == 0) throw ConfigError("thinker: sizes must be positive");
  if (use_lora && lora_rank == 0) throw ConfigError("thinker: LoRA rank must be positive");
}

Tensor apply_lora(const Tensor& base_out, const Tensor& x, const LoraAdapter& adapter) {
  if (adapter.rank == 0) throw ConfigError("apply_lora: zero rank");
  const Tensor delta = linear(linear(x, adapter.a), adapter.b);
  if (delta.shape() != base_out.shape()) {
    throw DimensionError("apply_lora: adapter output " + shape_str(delta.shape()) + " vs base " +
                         shape_str(base_out.shape()));
  }
  return add(base_out, scale(delta, adapter.scaling()));
}

Thinker::Thinker(ParameterStore& store, const ThinkerConfig& config, const std::string& prefix)
    : config_(config), prefix_(prefix) {
  config_.validate();
  const auto d = config_.d_model;
  token_embedding_ = store.add(prefix + ".tok_emb", {config_.vocab_size, d}, InitSpec::gaussian(0.02), false);
  position_embedding_ =
      store.add(prefix + ".pos_emb", {config_.max_seq_len, d}, InitSpec::gaussian(0.02), false);
  const auto fan_in = InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(d)));
  static constexpr std::array<const char*, 4> kTargetNames = {"q", "k", "v", "o"};
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto lp = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.ln_attn = register_layer_norm(store, lp + ".ln_attn", d);
    layer.attn = register_attention(store, lp + ".attn", d);
    layer.ln_ffn = register_layer_norm(store, lp + ".ln_ffn", d);
    layer.ffn = register_ffn(store, lp + ".ffn", d, 4 * d);
    if (config_.use_lora) {
      for (std::size_t t = 0; t < 4; ++t) {
        LoraAdapter adapter;
        adapter.target = static_cast<LoraTarget>(t);
        adapter.rank = config_.lora_rank;
        adapter.alpha = config_.lora_alpha;
        const auto name = lp + ".lora_" + kTargetNames[t];
        adapter.a = store.add(name + ".A", {config_.lora_rank, d}, fan_in);
        adapter.b = store.add(name + ".B", {d, config_.lora_rank}, InitSpec::zeros());
        layer.lora[t] = static_cast<int>(adapters_.size());
        adapters_.push_back(adapter);
      }
    }
    layers_.push_back(std::move(layer));
  }
  final_norm_ = register_layer_norm(store, prefix + ".ln_final", d);
  head_ = store.add(prefix + ".lm_head", {config_.vocab_size, d}, fan_in);
  if (config_.frozen) {
    for (auto& p : store.entries()) {
      if (p.name.rfind(prefix + ".", 0) != 0) continue;
      const bool is_adapter = p.name.find(".lora_") != std::string::npos;
      p.trainable = is_adapter;
      p.tensor.set_requires_grad(is_adapter);
    }
  }
}

Tensor Thinker::embed_tokens(std::span<const int> ids) const {
  std::vector<std::size_t> idx;
  idx.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw ContractError("thinker: token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(config_.vocab_size));
    }
    idx.push_back(static_cast<std::size_t>(id));
  }
  return gather_rows(token_embedding_, idx);
}

Tensor Thinker::add_positions(const Tensor& x) const {
  const auto len = x.rows();
  if (len > config_.max_seq_len) {
    throw ContractError("thinker: sequence of " + std::to_string(len) + " exceeds max_seq_len " +
                        std::to_string(config_.max_seq_len));
  }
  return add(x, slice_rows(position_embedding_, 0, len));
}

Tensor Thinker::project(const Tensor& x, const Tensor& w, const Tensor& b, int lora) const {
  Tensor out = linear(x, w, b);
  if (lora >= 0) out = apply_lora(out, x, adapters_[static_cast<std::size_t>(lora)]);
  return out;
}

Tensor Thinker::encode_layers(const Tensor& input, const std::vector<std::uint8_t>& key_valid,
                              std::size_t begin, std::size_t end) const {
  if (begin > end || end > layers_.size()) throw ContractError("thinker: bad layer range");
  AttentionMask mask;
  mask.causal = true;
  mask.key_valid = key_valid;
  Tensor x = input;
  for (std::size_t l = begin; l < end; ++l) {
    const auto& layer = layers_[l];
    const Tensor h = apply_layer_norm(x, layer.ln_attn);
    const Tensor q = project(h, layer.attn.wq, layer.attn.bq, layer.lora[0]);
    const Tensor k = project(h, layer.attn.wk, layer.attn.bk, layer.lora[1]);
    const Tensor v = project(h, layer.attn.wv, layer.attn.bv, layer.lora[2]);
    const auto attn = multi_head_attention(q, k, v, config_.heads, mask);
    x = add(x, project(attn.out, layer.attn.wo, layer.attn.bo, layer.lora[3]));
    x = add(x, apply_ffn(apply_layer_norm(x, layer.ln_ffn), layer.ffn));
  }
  return x;
}

Tensor Thinker::final_norm(const Tensor& x) const { return apply_layer_norm(x, final_norm_); }

Tensor Thinker::encode(const Tensor& input, const std::vector<std::uint8_t>& key_valid) const {
  return final_norm(encode_layers(input, key_valid, 0, layers_.size()));
}

HiddenStates Thinker::forward(const TokenSequence& seq) const {
  return {encode(add_positions(embed_tokens(seq.ids))), seq.roles};
}

Tensor Thinker::lm_head(const Tensor& hidden) const { return matmul_nt(hidden, head_); }

std::vector<int> next_token_targets(std::span<const int> labels) {
  std::vector<int> out(labels.size(), kIgnoreIndex);
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) out[i] = labels[i + 1];
  return out;
}

CrossEntropyResult lm_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return cross_entropy(logits, labels);
}

}  // namespace ewmlab
