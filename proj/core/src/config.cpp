#include "ewmlab/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ewmlab/errors.hpp"
#include "json.hpp"

namespace ewmlab {

using nlohmann::json;

void TrainConfig::validate() const {
  if (steps == 0) throw ConfigError("train.steps must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ConfigError("train.warmup_fraction must lie in [0, 1]");
}

void EvalConfig::validate() const {
  if (kappas.empty()) throw ConfigError("eval.kappas must not be empty");
  for (double k : kappas)
    if (!(k > 0.0 && k <= 1.0)) throw ConfigError("eval.kappas must lie in (0, 1]");
  if (modes.empty()) throw ConfigError("eval.modes must not be empty");
}

Vocabulary RunConfig::vocabulary() const {
  Vocabulary v;
  v.emission_vocab = world.emission_vocab;
  v.text_vocab = world.text_vocab();
  v.num_classes = world.num_states;
  return v;
}

void RunConfig::finalize() {
  world.validate();
  model.thinker.vocab_size = vocabulary().size();
  model.num_classes = world.num_states;
  model.ewm.d = model.thinker.d_model;
  model.validate();
  train.validate();
  eval.validate();
}

namespace {

// Reads object fields by name and remembers them, so leftovers can be
// reported as unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + path_ + "." + key + " has the wrong type");
    }
  }

  template <typename T, typename Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string name;
    get(key, name);
    if (!name.empty()) out = parse(name);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key: " + where() + it.key());
    }
  }

 private:
  std::string where() const { return path_.empty() ? "" : path_ + "."; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json world_json(const GenConfig& c) {
  return {{"num_states", c.num_states},       {"video_len", c.video_len},
          {"audio_len", c.audio_len},         {"transcript_len", c.transcript_len},
          {"lead_lag", c.lead_lag},           {"noise", c.noise},
          {"stay_prob", c.stay_prob},         {"drift", c.drift},
          {"emission_vocab", c.emission_vocab}, {"emission_dim", c.emission_dim},
          {"words_per_state", c.words_per_state}, {"text_noise", c.text_noise},
          {"seed", c.seed},                   {"train_size", c.train_size},
          {"val_size", c.val_size},           {"test_size", c.test_size}};
}

void read_world(const json& j, GenConfig& c, const std::string& path) {
  Reader r(j, path);
  r.get("num_states", c.num_states);
  r.get("video_len", c.video_len);
  r.get("audio_len", c.audio_len);
  r.get("transcript_len", c.transcript_len);
  r.get("lead_lag", c.lead_lag);
  r.get("noise", c.noise);
  r.get("stay_prob", c.stay_prob);
  r.get("drift", c.drift);
  r.get("emission_vocab", c.emission_vocab);
  r.get("emission_dim", c.emission_dim);
  r.get("words_per_state", c.words_per_state);
  r.get("text_noise", c.text_noise);
  r.get("seed", c.seed);
  r.get("train_size", c.train_size);
  r.get("val_size", c.val_size);
  r.get("test_size", c.test_size);
  r.finish();
}

json run_json(const RunConfig& c) {
  const auto& t = c.model.thinker;
  const auto& e = c.model.ewm;
  std::vector<std::string> modes;
  for (auto m : c.eval.modes) modes.emplace_back(corruption_name(m));
  return {
      {"seed", c.seed},
      {"world", world_json(c.world)},
      {"thinker",
       {{"d_model", t.d_model},
        {"layers", t.layers},
        {"heads", t.heads},
        {"max_seq_len", t.max_seq_len},
        {"lora_rank", t.lora_rank},
        {"lora_alpha", t.lora_alpha},
        {"use_lora", t.use_lora},
        {"frozen", t.frozen}}},
      {"ewm",
       {{"d_w", e.d_w},
        {"steps", e.steps},
        {"n_future", e.n_future},
        {"heads", e.heads},
        {"layers", e.layers},
        {"kappa_min", e.kappa_min},
        {"kappa_max", e.kappa_max},
        {"p_drop", e.p_drop},
        {"lambda_img", e.lambda_img},
        {"n_base", e.n_base},
        {"mode", imagination_mode_name(e.mode)},
        {"rollout_context", rollout_context_name(e.rollout_context)}}},
      {"model",
       {{"truncate", c.model.truncate},
        {"belief_source", belief_source_name(c.model.belief_source)},
        {"placement", placement_name(c.model.placement)},
        {"boundary_residual", c.model.boundary_residual},
        {"inject_layer", inject_layer_name(c.model.inject_layer)},
        {"dropout_scope", dropout_scope_name(c.model.dropout_scope)}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"warmup_fraction", c.train.warmup_fraction},
        {"clip_norm", c.train.clip_norm}}},
      {"eval", {{"kappas", c.eval.kappas}, {"modes", modes}, {"limit", c.eval.limit}}},
  };
}

}  // namespace

std::string run_config_to_json(const RunConfig& config) { return run_json(config).dump(2); }

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  if (const auto* w = root.child("world")) read_world(*w, c.world, "world");
  if (const auto* tj = root.child("thinker")) {
    Reader r(*tj, "thinker");
    auto& t = c.model.thinker;
    r.get("d_model", t.d_model);
    r.get("layers", t.layers);
    r.get("heads", t.heads);
    r.get("max_seq_len", t.max_seq_len);
    r.get("lora_rank", t.lora_rank);
    r.get("lora_alpha", t.lora_alpha);
    r.get("use_lora", t.use_lora);
    r.get("frozen", t.frozen);
    r.finish();
  }
  if (const auto* ej = root.child("ewm")) {
    Reader r(*ej, "ewm");
    auto& e = c.model.ewm;
    r.get("d_w", e.d_w);
    r.get("steps", e.steps);
    r.get("n_future", e.n_future);
    r.get("heads", e.heads);
    r.get("layers", e.layers);
    r.get("kappa_min", e.kappa_min);
    r.get("kappa_max", e.kappa_max);
    r.get("p_drop", e.p_drop);
    r.get("lambda_img", e.lambda_img);
    r.get("n_base", e.n_base);
    r.get_enum("mode", e.mode, parse_imagination_mode);
    r.get_enum("rollout_context", e.rollout_context, parse_rollout_context);
    r.finish();
  }
  if (const auto* mj = root.child("model")) {
    Reader r(*mj, "model");
    auto& m = c.model;
    r.get("truncate", m.truncate);
    r.get_enum("belief_source", m.belief_source, parse_belief_source);
    r.get_enum("placement", m.placement, parse_placement);
    r.get("boundary_residual", m.boundary_residual);
    r.get_enum("inject_layer", m.inject_layer, parse_inject_layer);
    r.get_enum("dropout_scope", m.dropout_scope, parse_dropout_scope);
    r.finish();
  }
  if (const auto* tj = root.child("train")) {
    Reader r(*tj, "train");
    r.get("steps", c.train.steps);
    r.get("batch_size", c.train.batch_size);
    r.get("lr", c.train.lr);
    r.get("weight_decay", c.train.weight_decay);
    r.get("warmup_fraction", c.train.warmup_fraction);
    r.get("clip_norm", c.train.clip_norm);
    r.finish();
  }
  if (const auto* vj = root.child("eval")) {
    Reader r(*vj, "eval");
    r.get("kappas", c.eval.kappas);
    std::vector<std::string> modes;
    r.get("modes", modes);
    if (!modes.empty()) {
      c.eval.modes.clear();
      for (const auto& m : modes) c.eval.modes.push_back(parse_corruption(m));
    }
    r.get("limit", c.eval.limit);
    r.finish();
  }
  root.finish();
  c.finalize();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

std::string gen_config_to_json(const GenConfig& config) { return world_json(config).dump(2); }

GenConfig gen_config_from_json(const std::string& text) {
  GenConfig c;
  try {
    read_world(json::parse(text), c, "world");
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("world config is not valid JSON: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const RunConfig& config) {
  const auto text = run_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace ewmlab
