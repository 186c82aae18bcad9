#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ewmlab/model.hpp"
#include "ewmlab/world.hpp"

namespace ewmlab {

struct TrainConfig {
  std::size_t steps = 600;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  double weight_decay = 0.01;
  double warmup_fraction = 0.03;
  double clip_norm = 1.0;

  void validate() const;
};

struct EvalConfig {
  std::vector<double> kappas{1.0};
  std::vector<CorruptionMode> modes{CorruptionMode::None, CorruptionMode::DropAudio, CorruptionMode::DropVideo};
  // 0 = whole test split.
  std::size_t limit = 0;

  void validate() const;
};

struct RunConfig {
  // Initialization and training-order seed. The world has its own seed so
  // that runs differing only here are paired on identical data.
  std::uint64_t seed = 1;
  GenConfig world;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  // Vocabulary implied by the world settings.
  Vocabulary vocabulary() const;
  // Fills the derived fields (vocab size, class count, ewm.d) and validates.
  void finalize();
};

// JSON round trip. Missing keys keep their defaults; unknown keys are a
// ConfigError naming the key.
std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string gen_config_to_json(const GenConfig& config);
GenConfig gen_config_from_json(const std::string& text);

// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace ewmlab
