#include "ewmlab/mama.hpp"

#include <algorithm>
#include <cmath>

#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"

namespace ewmlab {

const char* regime_name(Regime regime) { return regime == Regime::Dual ? "dual" : "single"; }

Mama::Mama(ParameterStore& store, const MamaConfig& config, const std::string& prefix) : config_(config) {
  if (config_.n_base == 0) throw ConfigError("mama: N_b must be >= 1");
  if (config_.heads == 0 || config_.d_w % config_.heads != 0) {
    throw ConfigError("mama: d_w must be divisible by heads");
  }
  const auto dw = config_.d_w;
  for (auto regime : {Regime::Single, Regime::Dual}) {
    const auto rp = prefix + "." + regime_name(regime);
    auto& agg = regimes_[static_cast<std::size_t>(regime)];
    agg.queries = store.add(rp + ".queries", {n_queries(regime), dw}, InitSpec::gaussian(1.0), false);
    agg.block = register_cross_attention_block(store, rp + ".attn", dw, config_.heads, 1);
  }
  type_table_ = store.add(prefix + ".type_emb", {kTypeTableRows, dw}, InitSpec::gaussian(0.1), false);
  // Reserved type rows stay at zero.
  auto table = type_table_.mutable_data();
  std::fill(table.begin() + 2 * static_cast<std::ptrdiff_t>(dw), table.end(), 0.0);
  w_r_ = store.add(prefix + ".w_r", {dw, dw}, InitSpec::gaussian(1.0 / std::sqrt(double(dw))));
  alpha_ = store.add(prefix + ".alpha", {1}, InitSpec::constant(0.1), false);
}

std::size_t Mama::n_queries(Regime regime) const {
  return regime == Regime::Dual ? 2 * config_.n_base : config_.n_base;
}

const BeliefAggregatorParams& Mama::aggregator(Regime regime) const {
  return regimes_[static_cast<std::size_t>(regime)];
}

MemoryBank Mama::assemble_memory(const std::array<const Rollout*, 2>& rollouts) const {
  MemoryBank bank;
  std::vector<Tensor> rows;
  std::vector<std::size_t> type_rows;
  for (auto m : kModalities) {
    const Rollout* r = rollouts[index_of(m)];
    if (r == nullptr) continue;
    for (std::size_t s = 0; s < r->steps.size(); ++s) {
      rows.push_back(r->steps[s]);
      for (std::size_t k = 0; k < r->steps[s].rows(); ++k) {
        bank.type_ids.push_back(static_cast<int>(index_of(m)));
        bank.steps.push_back(static_cast<int>(s + 1));
        type_rows.push_back(index_of(m));
      }
    }
  }
  if (rows.empty()) throw ContractError("assemble_memory: no rollouts");
  bank.m = add(concat_rows(rows), gather_rows(type_table_, type_rows));
  return bank;
}

Tensor head_average(const Tensor& weights) {
  const auto& s = weights.shape();
  if (s.size() != 3) throw DimensionError("head_average: expected [heads x q x m], got " + shape_str(s));
  const auto h = s[0], q = s[1], m = s[2];
  std::vector<double> out(q * m, 0.0);
  const auto w = weights.data();
  for (std::size_t k = 0; k < h; ++k)
    for (std::size_t i = 0; i < q * m; ++i) out[i] += w[k * q * m + i];
  for (auto& v : out) v /= static_cast<double>(h);
  return Tensor({q, m}, std::move(out));
}

BeliefState Mama::aggregate(const MemoryBank& memory, Regime regime) const {
  bool has[2] = {false, false};
  for (int t : memory.type_ids) has[t] = true;
  const bool dual = has[0] && has[1];
  if (dual != (regime == Regime::Dual)) {
    throw ContractError(std::string("aggregate: ") + regime_name(regime) + " regime does not match memory with " +
                        (dual ? "two modalities" : "one modality"));
  }
  const auto& agg = aggregator(regime);
  const auto res = cross_attention_block(agg.queries, memory.m, agg.block);
  return {res.out, regime, head_average(res.attention)};
}

Tensor Mama::boundary_residual(const Tensor& b_out, const std::vector<Tensor>& boundaries) const {
  if (boundaries.empty()) throw ContractError("boundary_residual: no boundary tokens");
  const Tensor z = mean_rows(concat_rows(boundaries));
  return add_row(b_out, scale_by(linear(z, w_r_), alpha_));
}

std::vector<AttentionMassRow> export_attention_mass(const BeliefState& state, const MemoryBank& memory) {
  const auto q = state.attention.rows(), m = state.attention.cols();
  if (m != memory.size()) throw DimensionError("export_attention_mass: memory size mismatch");
  std::vector<AttentionMassRow> rows;
  rows.reserve(q * m);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < m; ++j)
      rows.push_back({i, j, memory.type_ids[j], memory.steps[j], state.attention.at(i, j)});
  return rows;
}

std::vector<std::array<double, 2>> modality_attention_mass(const BeliefState& state, const MemoryBank& memory) {
  const auto q = state.attention.rows(), m = state.attention.cols();
  std::vector<std::array<double, 2>> out(q, {0.0, 0.0});
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i][static_cast<std::size_t>(memory.type_ids[j])] += state.attention.at(i, j);
  return out;
}

}  // namespace ewmlab
