#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ewmlab/attention.hpp"
#include "ewmlab/params.hpp"
#include "ewmlab/random.hpp"
#include "ewmlab/tensor.hpp"

namespace ewmlab {

enum class Modality : std::uint8_t { Video = 0, Audio = 1 };
inline constexpr std::array<Modality, 2> kModalities = {Modality::Video, Modality::Audio};

inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }
inline Modality other(Modality m) { return m == Modality::Video ? Modality::Audio : Modality::Video; }
const char* modality_name(Modality m);

enum class RunMode : std::uint8_t { Train, Infer };

// Which past streams the rollout context is built from.
enum class ImaginationMode : std::uint8_t { Cross, SelfOnly, CrossOnly };
// accumulate: C(s+1) = [C(1); Y(1); ...; Y(s)].  latest_only: C(s+1) = [C(1); Y(s)].
enum class RolloutContext : std::uint8_t { Accumulate, LatestOnly };

const char* imagination_mode_name(ImaginationMode mode);
ImaginationMode parse_imagination_mode(const std::string& name);
const char* rollout_context_name(RolloutContext mode);
RolloutContext parse_rollout_context(const std::string& name);

struct EwmConfig {
  std::size_t d = 32;         // backbone width
  std::size_t d_w = 16;       // working width
  std::size_t steps = 3;      // rollout steps S
  std::size_t n_future = 4;   // future queries per step N_s
  std::size_t heads = 4;
  std::size_t layers = 2;     // cross-attention layers in the rollout block
  double kappa_min = 0.7;
  double kappa_max = 1.0;
  double p_drop = 0.15;
  double lambda_img = 1.0;
  std::size_t n_base = 4;     // N_b; dual regime uses 2 * N_b belief queries
  ImaginationMode mode = ImaginationMode::Cross;
  RolloutContext rollout_context = RolloutContext::Accumulate;

  void validate() const;
};

// Uniform on [kappa_min, kappa_max) in training, exactly 1 at inference.
double sample_keep_ratio(const EwmConfig& config, Rng& rng, RunMode mode);

// With probability p_drop marks one of the two modalities absent (uniform
// choice). Never removes the last present modality; identity at inference.
std::array<bool, 2> apply_modality_dropout(std::array<bool, 2> present, double p_drop, Rng& rng,
                                           RunMode mode);

// clamp(floor(kappa * len), 1, len - 1)
std::size_t split_point(std::size_t len, double kappa);

struct SplitResult {
  Tensor past;      // [T_p x d_w]
  Tensor fut;       // [(L - T_p) x d_w], detached; undefined when empty
  Tensor boundary;  // [1 x d_w], last past row
  std::size_t t_p = 0;

  bool has_future() const { return fut.defined(); }
};

// Training mode splits at split_point(); inference keeps the whole stream as
// past with an empty future.
SplitResult temporal_split(const Tensor& z, double kappa, RunMode mode);

struct ImaginationParams {
  Tensor future_queries;   // [N_s x d_w]
  Tensor step_embeddings;  // [S x d_w]
  CrossAttentionBlockParams block;
  Tensor w_out;            // [d_w x d_w]
};

struct Rollout {
  std::vector<Tensor> steps;  // S tensors of [N_s x d_w]
  // Rows of the context seen by each step (diagnostics).
  std::vector<std::size_t> context_rows;

  Tensor stacked() const;  // [S*N_s x d_w]
};

struct StepFidelity {
  std::vector<double> cosine;  // mean row cosine per step
  std::vector<double> mse;
};

struct ImaginationLoss {
  Tensor loss;  // scalar; undefined when no modality was supervised
  std::size_t supervised_modalities = 0;
  std::array<std::optional<StepFidelity>, 2> fidelity;
};

// Cross-modal temporal imagination: one unshared branch per modality, shared
// tag embeddings, shared-across-steps cross-attention within a branch.
class Ewm {
 public:
  Ewm(ParameterStore& store, const EwmConfig& config, const std::string& prefix = "ewm");

  const EwmConfig& config() const { return config_; }
  const ImaginationParams& branch(Modality m) const { return branches_[index_of(m)]; }
  const Tensor& down_projection(Modality m) const { return down_[index_of(m)]; }
  const Tensor& e_self() const { return e_self_; }
  const Tensor& e_cross() const { return e_cross_; }

  // Z = H W^T with W [d_w x d], no bias.
  Tensor bottleneck_project(const Tensor& h, Modality m) const;

  // [past_target + e_self ; past_other + e_cross], restricted by `mode`.
  // A cross_only context whose other modality is absent falls back to the
  // self rows so that the rollout always has memory.
  Tensor build_rollout_context(Modality target, const std::array<const SplitResult*, 2>& splits,
                               ImaginationMode mode) const;

  Rollout imagine(Modality m, const Tensor& context) const;

  // Mean over supervised modalities of the mean over steps of
  // MSE + 0.5 (1 - cos) against the pooled, detached future.
  ImaginationLoss imagination_loss(const std::array<const Rollout*, 2>& rollouts,
                                   const std::array<const SplitResult*, 2>& splits) const;

 private:
  EwmConfig config_;
  std::array<Tensor, 2> down_;
  std::array<ImaginationParams, 2> branches_;
  Tensor e_self_, e_cross_;
};

}  // namespace ewmlab
