#include "ewmlab/ewm.hpp"

#include <algorithm>
#include <cmath>

#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"

namespace ewmlab {

const char* modality_name(Modality m) { return m == Modality::Video ? "video" : "audio"; }

const char* imagination_mode_name(ImaginationMode mode) {
  switch (mode) {
    case ImaginationMode::Cross: return "cross";
    case ImaginationMode::SelfOnly: return "self_only";
    case ImaginationMode::CrossOnly: return "cross_only";
  }
  return "?";
}

ImaginationMode parse_imagination_mode(const std::string& name) {
  if (name == "cross") return ImaginationMode::Cross;
  if (name == "self_only") return ImaginationMode::SelfOnly;
  if (name == "cross_only") return ImaginationMode::CrossOnly;
  throw ConfigError("unknown imagination mode: " + name);
}

const char* rollout_context_name(RolloutContext mode) {
  return mode == RolloutContext::Accumulate ? "accumulate" : "latest_only";
}

RolloutContext parse_rollout_context(const std::string& name) {
  if (name == "accumulate") return RolloutContext::Accumulate;
  if (name == "latest_only") return RolloutContext::LatestOnly;
  throw ConfigError("unknown rollout_context: " + name);
}

void EwmConfig::validate() const {
  if (steps == 0) throw ConfigError("ewm: rollout steps S must be >= 1");
  if (n_future == 0) throw ConfigError("ewm: N_s must be >= 1");
  if (n_base == 0) throw ConfigError("ewm: N_b must be >= 1");
  if (d == 0 || d_w == 0) throw ConfigError("ewm: widths must be positive");
  if (heads == 0 || d_w % heads != 0) throw ConfigError("ewm: d_w must be divisible by heads");
  if (layers == 0) throw ConfigError("ewm: layers must be >= 1");
  if (!(kappa_min > 0.0 && kappa_min <= kappa_max && kappa_max <= 1.0)) {
    throw ConfigError("ewm: keep ratios must satisfy 0 < kappa_min <= kappa_max <= 1");
  }
  if (p_drop < 0.0 || p_drop > 1.0) throw ConfigError("ewm: p_drop must lie in [0, 1]");
  if (lambda_img < 0.0) throw ConfigError("ewm: lambda_img must be non-negative");
}

double sample_keep_ratio(const EwmConfig& config, Rng& rng, RunMode mode) {
  if (mode == RunMode::Infer) return 1.0;
  return config.kappa_min + (config.kappa_max - config.kappa_min) * uniform01(rng);
}

std::array<bool, 2> apply_modality_dropout(std::array<bool, 2> present, double p_drop, Rng& rng,
                                           RunMode mode) {
  if (!present[0] && !present[1]) throw ContractError("modality dropout: no modality present");
  if (mode == RunMode::Infer || p_drop <= 0.0) return present;
  // Both draws are consumed unconditionally so the stream position does not
  // depend on which modalities happen to be present.
  const double u = uniform01(rng);
  const double pick = uniform01(rng);
  if (!(present[0] && present[1])) return present;
  if (u < p_drop) present[pick < 0.5 ? 0 : 1] = false;
  return present;
}

std::size_t split_point(std::size_t len, double kappa) {
  if (len < 2) throw ContractError("temporal_split: stream of length " + std::to_string(len) +
                                   " cannot be split");
  const auto raw = static_cast<long long>(std::floor(kappa * static_cast<double>(len)));
  return static_cast<std::size_t>(std::clamp<long long>(raw, 1, static_cast<long long>(len) - 1));
}

SplitResult temporal_split(const Tensor& z, double kappa, RunMode mode) {
  const auto len = z.rows();
  SplitResult out;
  if (mode == RunMode::Infer) {
    out.t_p = len;
    out.past = z;
  } else {
    out.t_p = split_point(len, kappa);
    out.past = slice_rows(z, 0, out.t_p);
    out.fut = slice_rows(z, out.t_p, len).detach();
  }
  out.boundary = slice_rows(z, out.t_p - 1, out.t_p);
  return out;
}

Tensor Rollout::stacked() const {
  if (steps.empty()) throw ContractError("rollout: no steps");
  return concat_rows(steps);
}

Ewm::Ewm(ParameterStore& store, const EwmConfig& config, const std::string& prefix) : config_(config) {
  config_.validate();
  const auto d = config_.d, dw = config_.d_w;
  for (auto m : kModalities) {
    const auto mp = prefix + "." + modality_name(m);
    down_[index_of(m)] = store.add(mp + ".down", {dw, d}, InitSpec::gaussian(1.0 / std::sqrt(double(d))));
    auto& br = branches_[index_of(m)];
    br.future_queries = store.add(mp + ".future_queries", {config_.n_future, dw}, InitSpec::gaussian(1.0), false);
    br.step_embeddings = store.add(mp + ".step_emb", {config_.steps, dw}, InitSpec::gaussian(0.1), false);
    br.block = register_cross_attention_block(store, mp + ".rollout", dw, config_.heads, config_.layers);
    br.w_out = store.add(mp + ".w_out", {dw, dw}, InitSpec::gaussian(1.0 / std::sqrt(double(dw))));
  }
  e_self_ = store.add(prefix + ".e_self", {dw}, InitSpec::gaussian(0.1), false);
  e_cross_ = store.add(prefix + ".e_cross", {dw}, InitSpec::gaussian(0.1), false);
}

Tensor Ewm::bottleneck_project(const Tensor& h, Modality m) const {
  if (index_of(m) > 1) throw ContractError("bottleneck_project: unknown modality");
  return linear(h, down_[index_of(m)]);
}

Tensor Ewm::build_rollout_context(Modality target, const std::array<const SplitResult*, 2>& splits,
                                  ImaginationMode mode) const {
  const SplitResult* self = splits[index_of(target)];
  const SplitResult* cross = splits[index_of(other(target))];
  if (self == nullptr) throw ContractError("rollout context: target modality is absent");
  std::vector<Tensor> parts;
  if (mode != ImaginationMode::CrossOnly || cross == nullptr) parts.push_back(add_row(self->past, e_self_));
  if (mode != ImaginationMode::SelfOnly && cross != nullptr) parts.push_back(add_row(cross->past, e_cross_));
  return concat_rows(parts);
}

Rollout Ewm::imagine(Modality m, const Tensor& context) const {
  if (!context.defined() || context.rows() == 0) throw ContractError("imagine: empty context");
  const auto& br = branches_[index_of(m)];
  Rollout out;
  std::vector<Tensor> ctx{context};
  for (std::size_t s = 0; s < config_.steps; ++s) {
    const Tensor queries = add_row(br.future_queries, slice_rows(br.step_embeddings, s, s + 1));
    const Tensor memory = ctx.size() == 1 ? ctx.front() : concat_rows(ctx);
    out.context_rows.push_back(memory.rows());
    const auto f = cross_attention_block(queries, memory, br.block);
    Tensor y = linear(f.out, br.w_out);
    out.steps.push_back(y);
    if (config_.rollout_context == RolloutContext::LatestOnly) ctx.resize(1);
    ctx.push_back(y);
  }
  return out;
}

ImaginationLoss Ewm::imagination_loss(const std::array<const Rollout*, 2>& rollouts,
                                      const std::array<const SplitResult*, 2>& splits) const {
  ImaginationLoss out;
  std::vector<Tensor> per_modality;
  for (auto m : kModalities) {
    const auto i = index_of(m);
    if (rollouts[i] == nullptr) continue;
    if (splits[i] == nullptr || !splits[i]->has_future()) {
      throw ContractError(std::string("imagination_loss: no future target for ") + modality_name(m));
    }
    const Tensor target = adaptive_avg_pool_1d(splits[i]->fut, config_.n_future).detach();
    StepFidelity fid;
    std::vector<Tensor> step_losses;
    for (const auto& y : rollouts[i]->steps) {
      const Tensor mse = mse_loss(y, target);
      const Tensor cos = cosine_alignment_loss(y, target);
      fid.mse.push_back(mse.item());
      fid.cosine.push_back(1.0 - 2.0 * cos.item());
      step_losses.push_back(add(mse, cos));
    }
    Tensor total = step_losses.front();
    for (std::size_t s = 1; s < step_losses.size(); ++s) total = add(total, step_losses[s]);
    per_modality.push_back(scale(total, 1.0 / static_cast<double>(step_losses.size())));
    out.fidelity[i] = std::move(fid);
  }
  out.supervised_modalities = per_modality.size();
  if (per_modality.empty()) return out;
  Tensor loss = per_modality.front();
  for (std::size_t k = 1; k < per_modality.size(); ++k) loss = add(loss, per_modality[k]);
  out.loss = scale(loss, 1.0 / static_cast<double>(per_modality.size()));
  return out;
}

}  // namespace ewmlab
