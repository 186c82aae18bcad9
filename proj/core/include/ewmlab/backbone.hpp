#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ewmlab/attention.hpp"
#include "ewmlab/ops.hpp"
#include "ewmlab/params.hpp"

namespace ewmlab {

enum class Role : std::uint8_t { System, Video, Audio, Subtitle, Question, Answer, Belief, Pad };

const char* role_name(Role role);

// Token id layout of the toy thinker:
//   [specials | video codes | audio codes | transcript words | class labels]
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kSystem = 2;
  static constexpr int kQuestion = 3;
  static constexpr int kSpecials = 4;
  // Sentinel tokens that open every sequence (system role).
  static constexpr std::size_t kSentinelCount = 2;

  std::size_t emission_vocab = 32;
  std::size_t text_vocab = 16;
  std::size_t num_classes = 4;

  int video(int code) const { return kSpecials + code; }
  int audio(int code) const { return kSpecials + static_cast<int>(emission_vocab) + code; }
  int word(int w) const { return kSpecials + 2 * static_cast<int>(emission_vocab) + w; }
  int label(int k) const {
    return kSpecials + 2 * static_cast<int>(emission_vocab) + static_cast<int>(text_vocab) + k;
  }
  std::size_t size() const { return kSpecials + 2 * emission_vocab + text_vocab + num_classes; }
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<Role> roles;

  std::size_t size() const { return ids.size(); }
  // Half-open [begin, end) span of a role, if present.
  std::optional<std::pair<std::size_t, std::size_t>> region(Role role) const;
};

// Already-mapped model token ids per role. Empty roles are omitted.
struct TemplateInputs {
  std::vector<int> video;
  std::vector<int> audio;
  std::vector<int> subtitle;
  std::vector<int> question;
  std::vector<int> answer;
};

// Orders system -> video -> audio -> subtitle -> question -> answer. The
// system region holds the fixed sentinels [BOS, SYSTEM].
TokenSequence assemble_template(const TemplateInputs& inputs, std::size_t max_seq_len);

enum class LoraTarget : std::uint8_t { Q = 0, K = 1, V = 2, O = 3 };

struct ThinkerConfig {
  std::size_t vocab_size = 88;
  std::size_t d_model = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_seq_len = 96;
  std::size_t lora_rank = 4;
  double lora_alpha = 8.0;
  bool use_lora = true;
  // Base weights frozen; only adapters (and downstream modules) train.
  bool frozen = true;

  void validate() const;
};

struct LoraAdapter {
  LoraTarget target = LoraTarget::Q;
  std::size_t rank = 0;
  double alpha = 0.0;
  Tensor a;  // [r x d]
  Tensor b;  // [d x r], zero at init

  double scaling() const { return alpha / static_cast<double>(rank); }
};

// base_out + (alpha/r) * (x A^T) B^T
Tensor apply_lora(const Tensor& base_out, const Tensor& x, const LoraAdapter& adapter);

struct HiddenStates {
  Tensor h;  // [L x d], after the final norm
  std::vector<Role> roles;
};

// Small causal Pre-LN transformer with learned absolute positions, optional
// LoRA on the Q/K/V/O projections, and an untied LM head.
class Thinker {
 public:
  Thinker(ParameterStore& store, const ThinkerConfig& config, const std::string& prefix = "thinker");

  const ThinkerConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  Tensor embed_tokens(std::span<const int> ids) const;
  Tensor add_positions(const Tensor& x) const;
  // Runs every layer over position-encoded embeddings. `key_valid` marks pad
  // positions (0) that no query may attend to; empty means no padding.
  Tensor encode(const Tensor& x, const std::vector<std::uint8_t>& key_valid = {}) const;
  // Residual stream after layers [begin, end), without the final norm.
  Tensor encode_layers(const Tensor& x, const std::vector<std::uint8_t>& key_valid, std::size_t begin,
                       std::size_t end) const;
  Tensor final_norm(const Tensor& x) const;
  HiddenStates forward(const TokenSequence& seq) const;
  Tensor lm_head(const Tensor& hidden) const;

  const std::vector<LoraAdapter>& adapters() const { return adapters_; }

 private:
  struct Layer {
    LayerNormParams ln_attn, ln_ffn;
    AttentionProjections attn;
    FeedForwardParams ffn;
    std::array<int, 4> lora{-1, -1, -1, -1};  // index into adapters_
  };

  Tensor project(const Tensor& x, const Tensor& w, const Tensor& b, int lora) const;

  ThinkerConfig config_;
  std::string prefix_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  std::vector<Layer> layers_;
  LayerNormParams final_norm_;
  Tensor head_;
  std::vector<LoraAdapter> adapters_;
};

// Targets for next-token prediction: row i of the logits predicts labels[i+1].
std::vector<int> next_token_targets(std::span<const int> labels);

// Mean NLL over positions whose label is not kIgnoreIndex. If every label is
// ignored the loss is 0 and `all_ignored` is set.
CrossEntropyResult lm_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace ewmlab
