#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ewmlab/attention.hpp"
#include "ewmlab/backbone.hpp"
#include "ewmlab/params.hpp"
#include "ewmlab/tensor.hpp"

namespace ewmlab {

enum class Placement : std::uint8_t { Interleaved, SingleAv };

const char* placement_name(Placement p);
Placement parse_placement(const std::string& name);

// B_inject = LayerNorm(b W_ep^T + b_ep)
class Injector {
 public:
  Injector(ParameterStore& store, std::size_t d, std::size_t d_w, const std::string& prefix = "inject");

  Tensor up_project(const Tensor& beliefs) const;

  const Tensor& w_ep() const { return w_ep_; }
  const Tensor& b_ep() const { return b_ep_; }
  const LayerNormParams& norm() const { return norm_; }

 private:
  std::size_t d_, d_w_;
  Tensor w_ep_, b_ep_;
  LayerNormParams norm_;
};

struct Boundaries {
  std::size_t p_av = 0;   // one past the last video/audio position
  std::size_t p_ans = 0;  // first answer position
};

// Without video/audio, p_av falls back to the end of the system segment.
// Throws ContractError if the sequence has no answer region.
Boundaries locate_boundaries(std::span<const Role> roles);

// clamp(floor(kappa * len), 1, len)
std::size_t keep_count(std::size_t len, double kappa);

struct KeepMask {
  std::vector<std::size_t> kept;  // original positions retained, ascending
  std::vector<long> index_map;    // original position -> new position, -1 if removed

  // New index of the first kept position at or after `original`.
  std::size_t relocate(std::size_t original) const;
};

// Within every contiguous video/audio region keep the first keep_count()
// positions. Other roles are untouched; kappa = 1 is the identity.
KeepMask apply_keep_mask(std::span<const Role> roles, double kappa);

struct AugmentedSample {
  Tensor embeddings;  // [L' x d]
  std::vector<Role> roles;
  std::vector<int> labels;  // position labels; kIgnoreIndex where unsupervised
  std::vector<std::uint8_t> mask;  // 1 = attend
  Boundaries boundaries;  // in augmented coordinates (p_ans = first answer row)
  std::size_t n_beliefs = 0;
  std::size_t n_real = 0;  // rows before right padding

  std::size_t size() const { return roles.size(); }
};

// Inserts the first ceil(N_q/2) belief rows at p_av and the rest right before
// p_ans (interleaved), or all of them at p_av (single_av). `beliefs` may be
// undefined, in which case the sample passes through unchanged.
AugmentedSample interleave_inject(const Tensor& embeddings, std::span<const Role> roles,
                                  std::span<const int> labels, const Tensor& beliefs, Boundaries at,
                                  Placement placement = Placement::Interleaved);

// Right-pads every sample to the longest one: zero rows, mask 0, label
// kIgnoreIndex, role Pad.
void pad_batch(std::vector<AugmentedSample>& batch);

// Aligned text dump of the role / label / mask layout.
std::string dump_layout(const AugmentedSample& sample);

}  // namespace ewmlab
