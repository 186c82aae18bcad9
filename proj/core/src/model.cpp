#include "ewmlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"

namespace ewmlab {

const char* belief_source_name(BeliefSource s) {
  switch (s) {
    case BeliefSource::None: return "none";
    case BeliefSource::Random: return "random";
    case BeliefSource::Pooling: return "pooling";
    case BeliefSource::ImaginedPool: return "imagined_pool";
    case BeliefSource::Mama: return "mama";
  }
  return "?";
}

BeliefSource parse_belief_source(const std::string& name) {
  for (auto s : {BeliefSource::None, BeliefSource::Random, BeliefSource::Pooling, BeliefSource::ImaginedPool,
                 BeliefSource::Mama}) {
    if (name == belief_source_name(s)) return s;
  }
  throw ConfigError("unknown belief_source: " + name);
}

const char* inject_layer_name(InjectLayer l) { return l == InjectLayer::Embedding ? "embedding" : "final_hidden"; }

InjectLayer parse_inject_layer(const std::string& name) {
  if (name == "embedding") return InjectLayer::Embedding;
  if (name == "final_hidden") return InjectLayer::FinalHidden;
  throw ConfigError("unknown inject_layer: " + name);
}

const char* dropout_scope_name(DropoutScope s) { return s == DropoutScope::Ewm ? "ewm" : "sequence"; }

DropoutScope parse_dropout_scope(const std::string& name) {
  if (name == "ewm") return DropoutScope::Ewm;
  if (name == "sequence") return DropoutScope::Sequence;
  throw ConfigError("unknown dropout_scope: " + name);
}

void ModelConfig::validate() const {
  thinker.validate();
  ewm.validate();
  if (ewm.d != thinker.d_model) throw ConfigError("ewm.d must equal thinker.d_model");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

Episode truncate_episode(const Episode& episode, double kappa) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ContractError("truncate_episode: kappa must lie in (0, 1]");
  Episode out = episode;
  out.video.resize(keep_count(episode.video.size(), kappa));
  out.audio.resize(keep_count(episode.audio.size(), kappa));
  return out;
}

Model::Model(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t init_seed)
    : config_(config), vocab_(vocab), store_(init_seed) {
  config_.validate();
  if (config_.thinker.vocab_size != vocab_.size()) {
    throw ConfigError("thinker.vocab_size " + std::to_string(config_.thinker.vocab_size) +
                      " does not match the world vocabulary of " + std::to_string(vocab_.size()));
  }
  if (vocab_.num_classes != config_.num_classes) throw ConfigError("vocabulary class count mismatch");
  thinker_ = std::make_unique<Thinker>(store_, config_.thinker);
  const auto src = config_.belief_source;
  const bool needs_ewm = src == BeliefSource::Pooling || config_.imagination();
  const bool needs_mama = src == BeliefSource::Mama || (src == BeliefSource::ImaginedPool && config_.boundary_residual);
  if (needs_ewm) {
    ewm_ = std::make_unique<Ewm>(store_, config_.ewm);
    if (src == BeliefSource::Pooling) {
      for (auto& p : store_.entries()) {
        if (p.name.rfind("ewm.", 0) == 0 && p.name.find(".down") == std::string::npos) {
          p.trainable = false;
          p.tensor.set_requires_grad(false);
        }
      }
    }
  }
  if (needs_mama) {
    mama_ = std::make_unique<Mama>(store_, MamaConfig{config_.ewm.d_w, config_.ewm.n_base, config_.ewm.heads});
  }
  if (config_.beliefs()) injector_ = std::make_unique<Injector>(store_, config_.thinker.d_model, config_.ewm.d_w);
  if (src == BeliefSource::Random) {
    for (auto regime : {Regime::Single, Regime::Dual}) {
      const auto nq = regime == Regime::Dual ? 2 * config_.ewm.n_base : config_.ewm.n_base;
      const auto name = std::string("beliefs.random.") + regime_name(regime);
      random_beliefs_[static_cast<std::size_t>(regime)] =
          store_.add(name, {nq, config_.ewm.d_w}, InitSpec::gaussian(1.0), false);
      store_.set_trainable(name, false);
    }
  }
}

TokenSequence Model::sequence_for(const Episode& episode, std::array<bool, 2> keep, int answer) const {
  TemplateInputs in;
  if (keep[0])
    for (int c : episode.video) in.video.push_back(vocab_.video(c));
  if (keep[1])
    for (int c : episode.audio) in.audio.push_back(vocab_.audio(c));
  for (int w : episode.text) in.subtitle.push_back(vocab_.word(w));
  in.question.push_back(Vocabulary::kQuestion);
  in.answer.push_back(vocab_.label(answer));
  return assemble_template(in, config_.thinker.max_seq_len);
}

SamplePlan Model::plan(const Episode& episode, double kappa, std::array<bool, 2> ewm_present,
                       std::array<bool, 2> seq_present, RunMode mode) const {
  SamplePlan out;
  out.kappa = kappa;
  out.ewm_present = ewm_present;
  const int answer = episode.label;
  if (answer < 0 || static_cast<std::size_t>(answer) >= config_.num_classes) {
    throw ContractError("episode label " + std::to_string(answer) + " outside class range");
  }
  out.sequence = sequence_for(episode, seq_present, answer);
  const auto& seq = out.sequence;
  const Tensor emb = thinker_->embed_tokens(seq.ids);

  Tensor beliefs;
  const auto src = config_.belief_source;
  const bool both = ewm_present[0] && ewm_present[1];
  const Regime regime = both ? Regime::Dual : Regime::Single;
  if (src == BeliefSource::Random) {
    beliefs = random_beliefs_[static_cast<std::size_t>(regime)];
  } else if (src != BeliefSource::None) {
    // Full-observation forward over the audiovisual prefix; causality makes
    // these rows identical to those of a forward over the whole sequence.
    const auto p_av = locate_boundaries(seq.roles).p_av;
    const Tensor h = thinker_->encode(thinker_->add_positions(slice_rows(emb, 0, p_av)));
    std::array<std::optional<SplitResult>, 2> splits;
    for (auto m : kModalities) {
      if (!ewm_present[index_of(m)]) continue;
      const Role role = m == Modality::Video ? Role::Video : Role::Audio;
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < p_av; ++i)
        if (seq.roles[i] == role) rows.push_back(i);
      if (rows.empty()) throw ContractError(std::string("plan: ") + modality_name(m) + " marked present but empty");
      const Tensor z = ewm_->bottleneck_project(gather_rows(h, rows), m);
      splits[index_of(m)] = temporal_split(z, kappa, mode);
    }
    const std::array<const SplitResult*, 2> split_ptrs = {splits[0] ? &*splits[0] : nullptr,
                                                          splits[1] ? &*splits[1] : nullptr};
    std::vector<Tensor> boundaries;
    for (const auto* s : split_ptrs)
      if (s) boundaries.push_back(s->boundary);
    const auto nb = config_.ewm.n_base;

    if (src == BeliefSource::Pooling) {
      std::vector<Tensor> parts;
      for (const auto* s : split_ptrs)
        if (s) parts.push_back(adaptive_avg_pool_1d(s->past, nb));
      beliefs = concat_rows(parts);
    } else {
      for (auto m : kModalities) {
        if (!split_ptrs[index_of(m)]) continue;
        const Tensor ctx = ewm_->build_rollout_context(m, split_ptrs, config_.ewm.mode);
        out.rollouts[index_of(m)] = ewm_->imagine(m, ctx);
      }
      const std::array<const Rollout*, 2> roll_ptrs = {out.rollouts[0] ? &*out.rollouts[0] : nullptr,
                                                       out.rollouts[1] ? &*out.rollouts[1] : nullptr};
      if (mode == RunMode::Train) out.imagination = ewm_->imagination_loss(roll_ptrs, split_ptrs);
      Tensor b_out;
      if (src == BeliefSource::Mama) {
        out.memory = mama_->assemble_memory(roll_ptrs);
        out.belief = mama_->aggregate(*out.memory, regime);
        b_out = out.belief->b_final;
      } else {
        std::vector<Tensor> parts;
        for (const auto* r : roll_ptrs)
          if (r) parts.push_back(adaptive_avg_pool_1d(r->stacked(), nb));
        b_out = concat_rows(parts);
      }
      beliefs = config_.boundary_residual ? mama_->boundary_residual(b_out, boundaries) : b_out;
      if (out.belief) out.belief->b_final = beliefs;
    }
  }
  const Tensor injected = beliefs.defined() ? injector_->up_project(beliefs) : Tensor();

  std::vector<int> labels(seq.size(), kIgnoreIndex);
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq.roles[i] == Role::Answer) labels[i] = seq.ids[i];
  const double keep_ratio = (mode == RunMode::Train && config_.truncate) ? kappa : 1.0;
  const KeepMask keep = apply_keep_mask(seq.roles, keep_ratio);
  std::vector<Role> kept_roles;
  std::vector<int> kept_labels;
  for (auto k : keep.kept) {
    kept_roles.push_back(seq.roles[k]);
    kept_labels.push_back(labels[k]);
  }
  Tensor kept = keep.kept.size() == seq.size() ? emb : gather_rows(emb, keep.kept);
  if (config_.inject_layer == InjectLayer::FinalHidden) {
    kept = thinker_->encode_layers(thinker_->add_positions(kept), {}, 0, config_.thinker.layers - 1);
  }
  out.augmented = interleave_inject(kept, kept_roles, kept_labels, injected, locate_boundaries(kept_roles),
                                    config_.placement);
  return out;
}

Tensor Model::hidden(const AugmentedSample& sample) const {
  const auto n = config_.thinker.layers;
  if (config_.inject_layer == InjectLayer::FinalHidden) {
    return thinker_->final_norm(thinker_->encode_layers(sample.embeddings, sample.mask, n - 1, n));
  }
  return thinker_->encode(thinker_->add_positions(sample.embeddings), sample.mask);
}

LmResult Model::lm_loss(const AugmentedSample& sample) const {
  const auto targets = next_token_targets(sample.labels);
  std::vector<std::size_t> rows;
  std::vector<int> row_targets;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == kIgnoreIndex) continue;
    rows.push_back(i);
    row_targets.push_back(targets[i]);
  }
  LmResult out;
  if (rows.empty()) {
    out.nll_sum = Tensor::scalar(0.0);
    return out;
  }
  const Tensor h = hidden(sample);
  const auto ce = lm_cross_entropy(thinker_->lm_head(gather_rows(h, rows)), row_targets);
  out.supervised = ce.supervised;
  out.nll_sum = scale(ce.loss, static_cast<double>(ce.supervised));
  return out;
}

StepOutput Model::forward_batch(std::span<const Episode> batch, Rng& rng) const {
  if (batch.empty()) throw ContractError("forward_batch: empty batch");
  StepOutput out;
  std::vector<SamplePlan> plans;
  plans.reserve(batch.size());
  const bool ewm_on = config_.beliefs();
  const bool draws_kappa = ewm_on || config_.truncate;
  for (const auto& ep : batch) {
    const double kappa = draws_kappa ? sample_keep_ratio(config_.ewm, rng, RunMode::Train) : 1.0;
    const std::array<bool, 2> avail = {!ep.video.empty(), !ep.audio.empty()};
    auto present = avail;
    if (ewm_on) present = apply_modality_dropout(avail, config_.ewm.p_drop, rng, RunMode::Train);
    if (present != avail) ++out.dropped;
    const auto seq_present = config_.dropout_scope == DropoutScope::Sequence ? present : avail;
    plans.push_back(plan(ep, kappa, present, seq_present, RunMode::Train));
    out.mean_kappa += kappa;
  }
  out.mean_kappa /= static_cast<double>(batch.size());

  std::vector<AugmentedSample> augmented;
  augmented.reserve(plans.size());
  for (auto& p : plans) augmented.push_back(p.augmented);
  pad_batch(augmented);

  Tensor nll;
  std::size_t supervised = 0;
  for (const auto& a : augmented) {
    const auto r = lm_loss(a);
    supervised += r.supervised;
    nll = nll.defined() ? add(nll, r.nll_sum) : r.nll_sum;
  }
  const Tensor lm = scale(nll, 1.0 / static_cast<double>(std::max<std::size_t>(supervised, 1)));
  out.lm = lm.item();

  Tensor img;
  std::vector<double> cos_sum, mse_sum;
  std::size_t fid_count = 0;
  for (const auto& p : plans) {
    if (!p.imagination.loss.defined()) continue;
    img = img.defined() ? add(img, p.imagination.loss) : p.imagination.loss;
    ++out.img_samples;
    for (const auto& f : p.imagination.fidelity) {
      if (!f) continue;
      cos_sum.resize(f->cosine.size(), 0.0);
      mse_sum.resize(f->mse.size(), 0.0);
      for (std::size_t s = 0; s < f->cosine.size(); ++s) {
        cos_sum[s] += f->cosine[s];
        mse_sum[s] += f->mse[s];
      }
      ++fid_count;
    }
  }
  if (img.defined()) {
    img = scale(img, 1.0 / static_cast<double>(out.img_samples));
    out.img = img.item();
    out.has_img = true;
    out.total = add(lm, scale(img, config_.ewm.lambda_img));
    for (auto& c : cos_sum) c /= static_cast<double>(fid_count);
    for (auto& m : mse_sum) m /= static_cast<double>(fid_count);
    out.step_cosine = std::move(cos_sum);
    out.step_mse = std::move(mse_sum);
  } else {
    out.total = lm;
  }
  out.total_value = out.total.item();
  return out;
}

Prediction Model::predict(const Episode& episode, const Scenario& scenario, BeliefDiagnostics* diag) const {
  NoGradGuard no_grad;
  Episode ep = corrupt_modality(episode, scenario.corruption);
  if (scenario.kappa < 1.0) ep = truncate_episode(ep, scenario.kappa);
  ep.label = 0;  // placeholder answer; scoring reads the row before it
  const std::array<bool, 2> present = {!ep.video.empty(), !ep.audio.empty()};
  SamplePlan p = plan(ep, 1.0, present, present, RunMode::Infer);
  const auto& aug = p.augmented;
  const Tensor h = hidden(aug);
  const std::size_t row = aug.boundaries.p_ans - 1;
  const std::size_t idx[] = {row};
  const auto logp = log_softmax_row(thinker_->lm_head(gather_rows(h, idx)), 0);
  Prediction out;
  for (std::size_t k = 0; k < config_.num_classes; ++k)
    out.class_log_probs.push_back(logp[static_cast<std::size_t>(vocab_.label(static_cast<int>(k)))]);
  out.label = static_cast<int>(std::max_element(out.class_log_probs.begin(), out.class_log_probs.end()) -
                               out.class_log_probs.begin());
  if (diag) {
    diag->memory = p.memory;
    diag->belief = p.belief;
    diag->augmented = aug;
  }
  return out;
}

}  // namespace ewmlab
