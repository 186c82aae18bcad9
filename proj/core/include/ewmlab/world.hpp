#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ewmlab/random.hpp"

namespace ewmlab {

// Generator settings for the synthetic affect world.
struct GenConfig {
  std::size_t num_states = 4;
  std::size_t video_len = 8;
  std::size_t audio_len = 8;
  std::size_t transcript_len = 3;
  // Audio emissions reflect the latent state this many steps ahead of video.
  std::size_t lead_lag = 2;
  double noise = 1.5;
  // Probability of keeping the current state at each step.
  double stay_prob = 0.99;
  // Share of the leaving mass that goes to the next state (mod K).
  double drift = 0.6;
  std::size_t emission_vocab = 32;
  std::size_t emission_dim = 4;
  std::size_t words_per_state = 4;
  // Probability that a transcript word is replaced by a uniform random word.
  double text_noise = 0.1;
  std::uint64_t seed = 1;
  std::size_t train_size = 2000;
  std::size_t val_size = 200;
  std::size_t test_size = 1000;

  std::size_t text_vocab() const { return num_states * words_per_state; }
  void validate() const;
};

// Latent Markov chain plus per-modality emission geometry.
struct AffectProcess {
  std::size_t num_states = 0;
  std::vector<double> transition;  // [K x K] row-major, rows sum to 1
  std::vector<double> initial;     // stationary distribution of `transition`
  std::size_t emission_dim = 0;
  std::vector<double> video_prototypes;  // [K x e]
  std::vector<double> audio_prototypes;  // [K x e]
  std::vector<double> video_codebook;    // [V x e]
  std::vector<double> audio_codebook;    // [V x e]
  std::size_t emission_vocab = 0;
  std::size_t lead_lag = 0;
  double noise = 0.0;
  std::size_t video_len = 0;
  std::size_t audio_len = 0;
  std::size_t transcript_len = 0;
  std::size_t words_per_state = 0;
  double text_noise = 0.0;

  double t(std::size_t from, std::size_t to) const { return transition[from * num_states + to]; }
  std::size_t latent_len() const { return std::max(video_len, audio_len); }
  void validate() const;
};

// Deterministic in `config` (prototypes and codebooks are drawn from config.seed).
AffectProcess make_process(const GenConfig& config);

// Stationary distribution by power iteration.
std::vector<double> stationary_distribution(const std::vector<double>& transition, std::size_t k);

struct Episode {
  std::vector<int> video;  // emission codes in [0, emission_vocab)
  std::vector<int> audio;
  std::vector<int> text;   // transcript words in [0, text_vocab)
  int label = 0;           // final latent state
  std::uint64_t seed = 0;
  // Diagnostics only; never serialized and never shown to a model.
  std::vector<int> latent;
};

Episode sample_episode(const AffectProcess& process, Rng& rng);
Episode sample_episode(const AffectProcess& process, std::uint64_t seed);

enum class CorruptionMode { None, DropVideo, DropAudio };

const char* corruption_name(CorruptionMode mode);
CorruptionMode parse_corruption(const std::string& name);

// Removes one modality's tokens. Throws ContractError when that would leave
// no audiovisual modality at all.
Episode corrupt_modality(const Episode& episode, CorruptionMode mode);

struct Dataset {
  std::vector<Episode> train, val, test;
};

// Disjoint per-split seeds; episode i of split s uses mix_seed(mix_seed(seed, s), i).
Dataset make_dataset(const GenConfig& config);

// One JSON object per line: {"video":[..],"audio":[..],"text":[..],"label":k,"meta":{"seed":n}}.
std::string episode_to_jsonl(const Episode& episode);
Episode episode_from_jsonl(const std::string& line);
void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes(const std::filesystem::path& path);

// Writes train/val/test .jsonl files plus manifest.json (config echo and
// per-split FNV-1a checksums) into `dir`.
void write_dataset(const std::filesystem::path& dir, const GenConfig& config, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

std::string file_checksum(const std::filesystem::path& path);

}  // namespace ewmlab
