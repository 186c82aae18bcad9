#include "ewmlab/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ewmlab/config.hpp"
#include "ewmlab/errors.hpp"
#include "json.hpp"

namespace ewmlab {

using nlohmann::json;

void GenConfig::validate() const {
  if (num_states == 0) throw ConfigError("world: num_states must be positive");
  if (video_len < 2 || audio_len < 2) throw ConfigError("world: modality lengths must be at least 2");
  if (noise < 0.0) throw ConfigError("world: noise must be non-negative");
  if (stay_prob < 0.0 || stay_prob > 1.0) throw ConfigError("world: stay_prob must lie in [0, 1]");
  if (drift < 0.0 || drift > 1.0) throw ConfigError("world: drift must lie in [0, 1]");
  if (text_noise < 0.0 || text_noise > 1.0) throw ConfigError("world: text_noise must lie in [0, 1]");
  if (emission_vocab == 0 || emission_dim == 0 || words_per_state == 0) {
    throw ConfigError("world: emission_vocab, emission_dim and words_per_state must be positive");
  }
  if (train_size == 0 || val_size == 0 || test_size == 0) throw ConfigError("world: split sizes must be >= 1");
}

void AffectProcess::validate() const {
  for (std::size_t i = 0; i < num_states; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < num_states; ++j) row += t(i, j);
    if (std::abs(row - 1.0) > 1e-12) throw ConfigError("world: transition row does not sum to 1");
  }
  if (noise < 0.0) throw ConfigError("world: negative noise");
  for (std::size_t a = 0; a < num_states; ++a) {
    for (std::size_t b = a + 1; b < num_states; ++b) {
      bool same = true;
      for (std::size_t j = 0; j < emission_dim; ++j)
        same = same && video_prototypes[a * emission_dim + j] == video_prototypes[b * emission_dim + j];
      if (same) throw ConfigError("world: duplicate emission prototypes");
    }
  }
}

std::vector<double> stationary_distribution(const std::vector<double>& transition, std::size_t k) {
  std::vector<double> pi(k, 1.0 / static_cast<double>(k)), next(k);
  for (int it = 0; it < 100000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) next[j] += pi[i] * transition[i * k + j];
    double diff = 0.0;
    for (std::size_t j = 0; j < k; ++j) diff = std::max(diff, std::abs(next[j] - pi[j]));
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

AffectProcess make_process(const GenConfig& config) {
  config.validate();
  AffectProcess p;
  const auto k = config.num_states;
  p.num_states = k;
  p.transition.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (k == 1) {
      p.transition[0] = 1.0;
      break;
    }
    const double leave = 1.0 - config.stay_prob;
    const double to_next = k == 2 ? leave : leave * config.drift;
    const double rest = k == 2 ? 0.0 : (leave - to_next) / static_cast<double>(k - 2);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) p.transition[i * k + j] = config.stay_prob;
      else if (j == (i + 1) % k) p.transition[i * k + j] = to_next;
      else p.transition[i * k + j] = rest;
    }
  }
  p.initial = stationary_distribution(p.transition, k);
  p.emission_dim = config.emission_dim;
  p.emission_vocab = config.emission_vocab;
  p.lead_lag = config.lead_lag;
  p.noise = config.noise;
  p.video_len = config.video_len;
  p.audio_len = config.audio_len;
  p.transcript_len = config.transcript_len;
  p.words_per_state = config.words_per_state;
  p.text_noise = config.text_noise;

  Rng rng(mix_seed(config.seed, 0xA11CE));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](std::size_t n) {
    std::vector<double> v(n * config.emission_dim);
    for (auto& x : v) x = normal(rng);
    return v;
  };
  p.video_prototypes = draw(k);
  p.audio_prototypes = draw(k);
  p.video_codebook = draw(config.emission_vocab);
  p.audio_codebook = draw(config.emission_vocab);
  p.validate();
  return p;
}

namespace {

int quantize(const std::vector<double>& codebook, std::size_t dim, const std::vector<double>& point) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const auto n = codebook.size() / dim;
  for (std::size_t c = 0; c < n; ++c) {
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = codebook[c * dim + j] - point[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::size_t draw_index(const double* probs, std::size_t n, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace

Episode sample_episode(const AffectProcess& process, Rng& rng) {
  const auto k = process.num_states;
  const auto len = process.latent_len();
  Episode ep;
  ep.latent.resize(len);
  ep.latent[0] = static_cast<int>(draw_index(process.initial.data(), k, rng));
  for (std::size_t t = 1; t < len; ++t) {
    const auto prev = static_cast<std::size_t>(ep.latent[t - 1]);
    ep.latent[t] = static_cast<int>(draw_index(process.transition.data() + prev * k, k, rng));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = process.emission_dim;
  std::vector<double> point(dim);
  auto emit = [&](const std::vector<double>& prototypes, const std::vector<double>& codebook, int state) {
    for (std::size_t j = 0; j < dim; ++j)
      point[j] = prototypes[static_cast<std::size_t>(state) * dim + j] + process.noise * normal(rng);
    return quantize(codebook, dim, point);
  };
  for (std::size_t t = 0; t < process.video_len; ++t) {
    ep.video.push_back(emit(process.video_prototypes, process.video_codebook, ep.latent[t]));
  }
  for (std::size_t t = 0; t < process.audio_len; ++t) {
    const auto src = std::min(t + process.lead_lag, len - 1);
    ep.audio.push_back(emit(process.audio_prototypes, process.audio_codebook, ep.latent[src]));
  }
  // The transcript only covers the first third of the trajectory.
  const auto early = std::max<std::size_t>(1, len / 3);
  const auto vocab = static_cast<int>(k * process.words_per_state);
  std::uniform_int_distribution<int> word_in_state(0, static_cast<int>(process.words_per_state) - 1);
  std::uniform_int_distribution<int> any_word(0, vocab - 1);
  for (std::size_t i = 0; i < process.transcript_len; ++i) {
    const auto t = (i * early) / std::max<std::size_t>(process.transcript_len, 1);
    const int state = ep.latent[t];
    int w = state * static_cast<int>(process.words_per_state) + word_in_state(rng);
    if (uniform01(rng) < process.text_noise) w = any_word(rng);
    ep.text.push_back(w);
  }
  ep.label = ep.latent.back();
  return ep;
}

Episode sample_episode(const AffectProcess& process, std::uint64_t seed) {
  Rng rng(seed);
  Episode ep = sample_episode(process, rng);
  ep.seed = seed;
  return ep;
}

const char* corruption_name(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::None: return "full";
    case CorruptionMode::DropVideo: return "no_video";
    case CorruptionMode::DropAudio: return "no_audio";
  }
  return "?";
}

CorruptionMode parse_corruption(const std::string& name) {
  if (name == "full" || name == "none") return CorruptionMode::None;
  if (name == "no_video" || name == "drop_video") return CorruptionMode::DropVideo;
  if (name == "no_audio" || name == "drop_audio") return CorruptionMode::DropAudio;
  throw ConfigError("unknown modality mode: " + name);
}

Episode corrupt_modality(const Episode& episode, CorruptionMode mode) {
  Episode out = episode;
  if (mode == CorruptionMode::DropVideo) {
    if (episode.audio.empty()) throw ContractError("corrupt_modality: cannot drop video, audio already absent");
    out.video.clear();
  } else if (mode == CorruptionMode::DropAudio) {
    if (episode.video.empty()) throw ContractError("corrupt_modality: cannot drop audio, video already absent");
    out.audio.clear();
  }
  return out;
}

Dataset make_dataset(const GenConfig& config) {
  const auto process = make_process(config);
  Dataset ds;
  auto fill = [&](std::vector<Episode>& split, std::uint64_t stream, std::size_t n) {
    const auto split_seed = mix_seed(config.seed, stream);
    split.reserve(n);
    for (std::size_t i = 0; i < n; ++i) split.push_back(sample_episode(process, mix_seed(split_seed, i)));
  };
  fill(ds.train, 1, config.train_size);
  fill(ds.val, 2, config.val_size);
  fill(ds.test, 3, config.test_size);
  return ds;
}

std::string episode_to_jsonl(const Episode& episode) {
  json j;
  j["video"] = episode.video;
  j["audio"] = episode.audio;
  j["text"] = episode.text;
  j["label"] = episode.label;
  j["meta"] = {{"seed", episode.seed}};
  return j.dump();
}

Episode episode_from_jsonl(const std::string& line) {
  Episode ep;
  try {
    const auto j = json::parse(line);
    ep.video = j.at("video").get<std::vector<int>>();
    ep.audio = j.at("audio").get<std::vector<int>>();
    ep.text = j.at("text").get<std::vector<int>>();
    ep.label = j.at("label").get<int>();
    ep.seed = j.at("meta").at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed episode record: ") + e.what());
  }
  return ep;
}

void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& ep : episodes) out << episode_to_jsonl(ep) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Episode> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(episode_from_jsonl(line));
  }
  return out;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_dataset(const std::filesystem::path& dir, const GenConfig& config, const Dataset& dataset) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["format"] = "ewmlab-episodes";
  manifest["version"] = 1;
  manifest["config"] = json::parse(gen_config_to_json(config));
  const std::pair<const char*, const std::vector<Episode>*> splits[] = {
      {"train", &dataset.train}, {"val", &dataset.val}, {"test", &dataset.test}};
  for (const auto& [name, episodes] : splits) {
    const auto path = dir / (std::string(name) + ".jsonl");
    write_episodes(path, *episodes);
    manifest["splits"][name] = {{"file", std::string(name) + ".jsonl"},
                                {"count", episodes->size()},
                                {"fnv1a64", file_checksum(path)}};
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = read_episodes(dir / "train.jsonl");
  ds.val = read_episodes(dir / "val.jsonl");
  ds.test = read_episodes(dir / "test.jsonl");
  return ds;
}

}  // namespace ewmlab
