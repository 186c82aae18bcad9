#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ewmlab/attention.hpp"
#include "ewmlab/ewm.hpp"
#include "ewmlab/params.hpp"
#include "ewmlab/tensor.hpp"

namespace ewmlab {

enum class Regime : std::uint8_t { Single, Dual };

const char* regime_name(Regime regime);

inline constexpr std::size_t kTypeTableRows = 6;

struct MemoryBank {
  Tensor m;                   // [N_M x d_w]
  std::vector<int> type_ids;  // 0 = video imagination, 1 = audio imagination
  std::vector<int> steps;     // rollout step (1-based) of each row

  std::size_t size() const { return type_ids.size(); }
};

struct BeliefAggregatorParams {
  Tensor queries;  // [N_q x d_w]
  CrossAttentionBlockParams block;
};

struct BeliefState {
  Tensor b_final;  // [N_q x d_w]
  Regime regime = Regime::Dual;
  Tensor attention;  // [N_q x N_M], head-averaged, detached
};

struct MamaConfig {
  std::size_t d_w = 16;
  std::size_t n_base = 4;
  std::size_t heads = 4;
};

// Modality-aware belief aggregation over the imagined memory bank, with one
// query set and attention layer per regime and a shared type table, residual
// projection W_r and scalar alpha.
class Mama {
 public:
  Mama(ParameterStore& store, const MamaConfig& config, const std::string& prefix = "mama");

  const MamaConfig& config() const { return config_; }
  std::size_t n_queries(Regime regime) const;
  const BeliefAggregatorParams& aggregator(Regime regime) const;
  const Tensor& type_table() const { return type_table_; }
  const Tensor& w_r() const { return w_r_; }
  const Tensor& alpha() const { return alpha_; }

  // Video steps 1..S then audio steps 1..S, plus the type embedding per row.
  MemoryBank assemble_memory(const std::array<const Rollout*, 2>& rollouts) const;

  // Regime must match the number of modalities present in `memory`.
  BeliefState aggregate(const MemoryBank& memory, Regime regime) const;

  // b_out + alpha * W_r * mean(boundaries), broadcast to every belief row.
  Tensor boundary_residual(const Tensor& b_out, const std::vector<Tensor>& boundaries) const;

 private:
  MamaConfig config_;
  std::array<BeliefAggregatorParams, 2> regimes_;  // indexed by Regime
  Tensor type_table_;
  Tensor w_r_;
  Tensor alpha_;
};

struct AttentionMassRow {
  std::size_t belief_idx = 0;
  std::size_t memory_idx = 0;
  int memory_modality = 0;
  int step = 0;
  double weight = 0.0;
};

std::vector<AttentionMassRow> export_attention_mass(const BeliefState& state, const MemoryBank& memory);

// Per belief row: total attention on video rows and on audio rows.
std::vector<std::array<double, 2>> modality_attention_mass(const BeliefState& state, const MemoryBank& memory);

// Head average of a [heads x q x m] attention tensor.
Tensor head_average(const Tensor& weights);

}  // namespace ewmlab
