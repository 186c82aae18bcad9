#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ewmlab/config.hpp"
#include "ewmlab/model.hpp"
#include "ewmlab/optim.hpp"
#include "ewmlab/world.hpp"

namespace ewmlab {

struct TrainRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double lm = 0.0;
  double img = 0.0;
  double total = 0.0;
  bool has_img = false;
  double mean_kappa = 0.0;
  std::size_t dropped = 0;
  std::vector<double> step_cosine;
  std::vector<double> step_mse;
};

struct EvalRecord {
  CorruptionMode mode = CorruptionMode::None;
  double kappa = 1.0;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  std::size_t n = 0;
};

struct FidelityRecord {
  std::vector<double> cosine;  // per rollout step
  std::vector<double> mse;
  std::size_t samples = 0;
};

struct RunResult {
  std::string config_hash;
  std::vector<TrainRecord> trace;
  std::vector<EvalRecord> evals;
  std::optional<FidelityRecord> fidelity;

  // Throws ContractError if the scenario was not evaluated.
  const EvalRecord& eval(CorruptionMode mode, double kappa) const;
};

std::unique_ptr<Model> build_model(const RunConfig& config);

// One optimizer step on `batch`: zero grads, full training forward, backward, AdamW.
TrainRecord train_step(Model& model, AdamW& optimizer, std::span<const Episode> batch, Rng& rng);

std::vector<TrainRecord> train_model(Model& model, std::span<const Episode> train, const TrainConfig& config,
                                     std::uint64_t seed,
                                     const std::function<void(const TrainRecord&)>& on_step = {});

// Scores every episode under `scenario`; `threads` > 1 splits the episodes
// across worker threads.
EvalRecord evaluate(const Model& model, std::span<const Episode> episodes, const Scenario& scenario,
                    std::size_t threads = 1);

// Per-step imagination cosine / MSE against the pooled future on held-out
// episodes, with keep ratios drawn as in training and no modality dropout.
FidelityRecord imagination_fidelity(const Model& model, std::span<const Episode> episodes, std::uint64_t seed);

// Train on dataset.train, then evaluate on dataset.test over the configured
// modes x kappas grid.
RunResult run_experiment(const RunConfig& config, const Dataset& dataset, std::size_t threads = 1,
                         std::unique_ptr<Model>* trained = nullptr);

// train.csv, eval.csv, summary.json and config.json under `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunConfig& config, const RunResult& result);

}  // namespace ewmlab
