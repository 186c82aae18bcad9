#include "ewmlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "ewmlab/errors.hpp"
#include "ewmlab/metrics.hpp"
#include "ewmlab/optim.hpp"
#include "json.hpp"

namespace ewmlab {

const EvalRecord& RunResult::eval(CorruptionMode mode, double kappa) const {
  for (const auto& e : evals)
    if (e.mode == mode && std::abs(e.kappa - kappa) < 1e-12) return e;
  throw ContractError(std::string("scenario not evaluated: ") + corruption_name(mode) + " kappa=" +
                      std::to_string(kappa));
}

std::unique_ptr<Model> build_model(const RunConfig& config) {
  RunConfig c = config;
  c.finalize();
  return std::make_unique<Model>(c.model, c.vocabulary(), mix_seed(c.seed, 0x1417));
}

TrainRecord train_step(Model& model, AdamW& optimizer, std::span<const Episode> batch, Rng& rng) {
  model.store().zero_grad();
  StepOutput out = model.forward_batch(batch, rng);
  out.total.backward();
  optimizer.step();
  TrainRecord rec;
  rec.step = optimizer.step_count() - 1;
  rec.lr = optimizer.current_lr();
  rec.lm = out.lm;
  rec.img = out.img;
  rec.total = out.total_value;
  rec.has_img = out.has_img;
  rec.mean_kappa = out.mean_kappa;
  rec.dropped = out.dropped;
  rec.step_cosine = std::move(out.step_cosine);
  rec.step_mse = std::move(out.step_mse);
  return rec;
}

std::vector<TrainRecord> train_model(Model& model, std::span<const Episode> train, const TrainConfig& config,
                                     std::uint64_t seed, const std::function<void(const TrainRecord&)>& on_step) {
  config.validate();
  if (train.empty()) throw ContractError("train_model: empty training set");
  AdamWConfig opt_cfg;
  opt_cfg.weight_decay = config.weight_decay;
  opt_cfg.clip_norm = config.clip_norm;
  AdamW optimizer(model.store(), opt_cfg, LrSchedule{config.lr, config.warmup_fraction, config.steps});
  Rng order_rng(mix_seed(seed, 0x0D3E));
  Rng step_rng(mix_seed(seed, 0x57E9));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<TrainRecord> trace;
  trace.reserve(config.steps);
  std::vector<Episode> batch;
  for (std::size_t s = 0; s < config.steps; ++s) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }
    trace.push_back(train_step(model, optimizer, batch, step_rng));
    if (on_step) on_step(trace.back());
  }
  return trace;
}

EvalRecord evaluate(const Model& model, std::span<const Episode> episodes, const Scenario& scenario,
                    std::size_t threads) {
  if (episodes.empty()) throw ContractError("evaluate: empty episode set");
  std::vector<int> predicted(episodes.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) predicted[i] = model.predict(episodes[i], scenario).label;
  };
  threads = std::clamp<std::size_t>(threads, 1, episodes.size());
  if (threads == 1) {
    work(0, episodes.size());
  } else {
    std::vector<std::thread> pool;
    const auto chunk = (episodes.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const auto b = std::min(episodes.size(), t * chunk), e = std::min(episodes.size(), (t + 1) * chunk);
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  std::vector<int> truth;
  truth.reserve(episodes.size());
  for (const auto& ep : episodes) truth.push_back(ep.label);
  const auto cm = confusion(truth, predicted, model.config().num_classes);
  return {scenario.corruption, scenario.kappa, cm.accuracy(), cm.weighted_f1(), episodes.size()};
}

FidelityRecord imagination_fidelity(const Model& model, std::span<const Episode> episodes, std::uint64_t seed) {
  if (!model.config().imagination()) throw ContractError("imagination_fidelity: model has no imagination");
  NoGradGuard no_grad;
  Rng rng(mix_seed(seed, 0xF1DE));
  FidelityRecord out;
  const auto steps = model.config().ewm.steps;
  out.cosine.assign(steps, 0.0);
  out.mse.assign(steps, 0.0);
  std::size_t count = 0;
  for (const auto& ep : episodes) {
    const double kappa = sample_keep_ratio(model.config().ewm, rng, RunMode::Train);
    const std::array<bool, 2> present = {!ep.video.empty(), !ep.audio.empty()};
    const auto p = model.plan(ep, kappa, present, present, RunMode::Train);
    for (const auto& f : p.imagination.fidelity) {
      if (!f) continue;
      for (std::size_t s = 0; s < steps; ++s) {
        out.cosine[s] += f->cosine[s];
        out.mse[s] += f->mse[s];
      }
      ++count;
    }
    ++out.samples;
  }
  for (std::size_t s = 0; s < steps; ++s) {
    out.cosine[s] /= static_cast<double>(std::max<std::size_t>(count, 1));
    out.mse[s] /= static_cast<double>(std::max<std::size_t>(count, 1));
  }
  return out;
}

RunResult run_experiment(const RunConfig& config, const Dataset& dataset, std::size_t threads,
                         std::unique_ptr<Model>* trained) {
  RunConfig c = config;
  c.finalize();
  RunResult result;
  result.config_hash = config_hash(c);
  auto model = build_model(c);
  result.trace = train_model(*model, dataset.train, c.train, c.seed);
  std::span<const Episode> test = dataset.test;
  if (c.eval.limit > 0 && c.eval.limit < test.size()) test = test.first(c.eval.limit);
  for (auto mode : c.eval.modes)
    for (double kappa : c.eval.kappas) result.evals.push_back(evaluate(*model, test, {mode, kappa}, threads));
  if (c.model.imagination()) result.fidelity = imagination_fidelity(*model, test, c.seed);
  if (trained) *trained = std::move(model);
  return result;
}

void write_run_outputs(const std::filesystem::path& dir, const RunConfig& config, const RunResult& result) {
  std::filesystem::create_directories(dir);
  const auto steps = config.model.ewm.steps;
  std::vector<std::string> header = {"config_hash", "step", "lr", "loss_lm", "loss_img", "loss_total",
                                     "mean_kappa", "dropped"};
  for (std::size_t s = 1; s <= steps; ++s) header.push_back("cos_step" + std::to_string(s));
  for (std::size_t s = 1; s <= steps; ++s) header.push_back("mse_step" + std::to_string(s));
  {
    CsvWriter csv(dir / "train.csv", header);
    for (const auto& r : result.trace) {
      std::vector<std::string> row = {result.config_hash, fmt(r.step),       fmt(r.lr),
                                      fmt(r.lm),          r.has_img ? fmt(r.img) : "",
                                      fmt(r.total),       fmt(r.mean_kappa), fmt(r.dropped)};
      for (std::size_t s = 0; s < steps; ++s) row.push_back(s < r.step_cosine.size() ? fmt(r.step_cosine[s]) : "");
      for (std::size_t s = 0; s < steps; ++s) row.push_back(s < r.step_mse.size() ? fmt(r.step_mse[s]) : "");
      csv.row(row);
    }
  }
  {
    CsvWriter csv(dir / "eval.csv", {"config_hash", "modality", "kappa", "accuracy", "weighted_f1", "n"});
    for (const auto& e : result.evals) {
      csv.row({result.config_hash, corruption_name(e.mode), fmt(e.kappa), fmt(e.accuracy), fmt(e.weighted_f1),
               fmt(e.n)});
    }
  }
  nlohmann::json summary;
  summary["config_hash"] = result.config_hash;
  summary["seed"] = config.seed;
  summary["steps"] = result.trace.size();
  if (!result.trace.empty()) {
    summary["final_loss_lm"] = result.trace.back().lm;
    summary["final_loss_total"] = result.trace.back().total;
  }
  for (const auto& e : result.evals) {
    nlohmann::json j = {{"modality", corruption_name(e.mode)},
                        {"kappa", e.kappa},
                        {"accuracy", e.accuracy},
                        {"weighted_f1", e.weighted_f1},
                        {"n", e.n}};
    summary["eval"].push_back(j);
  }
  if (result.fidelity) {
    summary["fidelity"] = {{"cosine", result.fidelity->cosine}, {"mse", result.fidelity->mse}};
  }
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  std::ofstream(dir / "config.json") << run_config_to_json(config) << '\n';
}

}  // namespace ewmlab
