#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ewmlab/backbone.hpp"
#include "ewmlab/ewm.hpp"
#include "ewmlab/inject.hpp"
#include "ewmlab/mama.hpp"
#include "ewmlab/params.hpp"
#include "ewmlab/world.hpp"

namespace ewmlab {

// What the injected belief tokens are built from.
//   none          no belief tokens and no imagination
//   random        frozen gaussian rows
//   pooling       adaptive-pooled past of each modality, no imagination
//   imagined_pool adaptive-pooled imagined tokens, no MAMA
//   mama          full imagination + MAMA aggregation
enum class BeliefSource : std::uint8_t { None, Random, Pooling, ImaginedPool, Mama };
enum class InjectLayer : std::uint8_t { Embedding, FinalHidden };
// Whether modality dropout hides the modality from the EWM only or also
// removes its tokens from the language-model input.
enum class DropoutScope : std::uint8_t { Ewm, Sequence };

const char* belief_source_name(BeliefSource s);
BeliefSource parse_belief_source(const std::string& name);
const char* inject_layer_name(InjectLayer l);
InjectLayer parse_inject_layer(const std::string& name);
const char* dropout_scope_name(DropoutScope s);
DropoutScope parse_dropout_scope(const std::string& name);

struct ModelConfig {
  ThinkerConfig thinker;
  EwmConfig ewm;
  std::size_t num_classes = 4;
  // Apply the token keep mask to the language-model input during training.
  bool truncate = true;
  BeliefSource belief_source = BeliefSource::Mama;
  Placement placement = Placement::Interleaved;
  bool boundary_residual = true;
  InjectLayer inject_layer = InjectLayer::Embedding;
  DropoutScope dropout_scope = DropoutScope::Ewm;

  bool beliefs() const { return belief_source != BeliefSource::None; }
  bool imagination() const {
    return belief_source == BeliefSource::Mama || belief_source == BeliefSource::ImaginedPool;
  }
  void validate() const;
};

struct Scenario {
  CorruptionMode corruption = CorruptionMode::None;
  double kappa = 1.0;
};

// Everything produced for one sample up to (not including) the LM forward.
struct SamplePlan {
  TokenSequence sequence;  // template actually fed to the LM, before truncation
  double kappa = 1.0;
  std::array<bool, 2> ewm_present{false, false};
  AugmentedSample augmented;
  ImaginationLoss imagination;
  std::optional<MemoryBank> memory;
  std::optional<BeliefState> belief;
  std::array<std::optional<Rollout>, 2> rollouts;
};

struct LmResult {
  Tensor nll_sum;  // scalar, sum over supervised rows
  std::size_t supervised = 0;
};

struct StepOutput {
  Tensor total;  // scalar on the tape
  double lm = 0.0;
  double img = 0.0;        // 0 when no sample produced an imagination loss
  double total_value = 0.0;
  bool has_img = false;
  std::size_t img_samples = 0;
  double mean_kappa = 0.0;
  std::size_t dropped = 0;  // samples that lost a modality to dropout
  std::vector<double> step_cosine;  // averaged over samples and modalities
  std::vector<double> step_mse;
};

struct Prediction {
  int label = 0;
  std::vector<double> class_log_probs;
};

struct BeliefDiagnostics {
  std::optional<MemoryBank> memory;
  std::optional<BeliefState> belief;
  AugmentedSample augmented;
};

class Model {
 public:
  Model(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const Thinker& thinker() const { return *thinker_; }
  const Ewm* ewm() const { return ewm_.get(); }
  const Mama* mama() const { return mama_.get(); }
  const Injector* injector() const { return injector_.get(); }

  // Template for an episode with the given modalities kept. `answer` is the
  // class whose token fills the answer slot.
  TokenSequence sequence_for(const Episode& episode, std::array<bool, 2> keep, int answer) const;

  // Imagination and belief construction plus the augmented LM input for one
  // sample. Training mode splits at `kappa` and truncates the LM input when
  // configured; inference uses the whole stream.
  SamplePlan plan(const Episode& episode, double kappa, std::array<bool, 2> ewm_present,
                  std::array<bool, 2> seq_present, RunMode mode) const;

  // Runs the backbone over an augmented (possibly padded) sample and returns
  // the next-token NLL of the supervised rows.
  LmResult lm_loss(const AugmentedSample& sample) const;
  Tensor hidden(const AugmentedSample& sample) const;

  // Training losses for a batch; draws kappa and dropout from `rng`.
  StepOutput forward_batch(std::span<const Episode> batch, Rng& rng) const;

  Prediction predict(const Episode& episode, const Scenario& scenario, BeliefDiagnostics* diag = nullptr) const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  ParameterStore store_;
  std::unique_ptr<Thinker> thinker_;
  std::unique_ptr<Ewm> ewm_;
  std::unique_ptr<Mama> mama_;
  std::unique_ptr<Injector> injector_;
  std::array<Tensor, 2> random_beliefs_;  // indexed by Regime
};

// Shortens each modality to keep_count(len, kappa) leading tokens.
Episode truncate_episode(const Episode& episode, double kappa);

}  // namespace ewmlab
