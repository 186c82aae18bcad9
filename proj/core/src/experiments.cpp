#include "ewmlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "ewmlab/errors.hpp"
#include "ewmlab/metrics.hpp"

namespace ewmlab {

namespace {

GridPoint with(const RunConfig& base, std::string name, void (*edit)(RunConfig&)) {
  GridPoint p{std::move(name), base};
  edit(p.config);
  return p;
}

}  // namespace

std::vector<GridPoint> component_ablation_grid(const RunConfig& base) {
  std::vector<GridPoint> grid;
  grid.push_back(with(base, "a_lora", [](RunConfig& c) {
    c.model.belief_source = BeliefSource::None;
    c.model.truncate = false;
  }));
  grid.push_back(with(base, "b_truncation", [](RunConfig& c) {
    c.model.belief_source = BeliefSource::None;
    c.model.truncate = true;
  }));
  grid.push_back(with(base, "c_imagination", [](RunConfig& c) {
    c.model.truncate = true;
    c.model.belief_source = BeliefSource::ImaginedPool;
    c.model.placement = Placement::SingleAv;
    c.model.boundary_residual = false;
  }));
  grid.push_back(with(base, "d_mama", [](RunConfig& c) {
    c.model.truncate = true;
    c.model.belief_source = BeliefSource::Mama;
    c.model.placement = Placement::SingleAv;
    c.model.boundary_residual = false;
  }));
  grid.push_back(with(base, "e_interleaved", [](RunConfig& c) {
    c.model.truncate = true;
    c.model.belief_source = BeliefSource::Mama;
    c.model.placement = Placement::Interleaved;
    c.model.boundary_residual = false;
  }));
  grid.push_back(with(base, "f_full", [](RunConfig& c) {
    c.model.truncate = true;
    c.model.belief_source = BeliefSource::Mama;
    c.model.placement = Placement::Interleaved;
    c.model.boundary_residual = true;
  }));
  return grid;
}

std::vector<GridPoint> belief_source_grid(const RunConfig& base) {
  std::vector<GridPoint> grid;
  grid.push_back(with(base, "none", [](RunConfig& c) { c.model.belief_source = BeliefSource::None; }));
  grid.push_back(with(base, "random", [](RunConfig& c) { c.model.belief_source = BeliefSource::Random; }));
  grid.push_back(with(base, "pooling", [](RunConfig& c) { c.model.belief_source = BeliefSource::Pooling; }));
  grid.push_back(with(base, "ewm", [](RunConfig& c) { c.model.belief_source = BeliefSource::Mama; }));
  return grid;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"rollout_steps", "n_base",    "p_drop",         "lambda_img",
                                                "imagination_mode", "keep_ratio", "rollout_context"};
  return axes;
}

std::vector<GridPoint> sweep_grid(const RunConfig& base, const std::string& axis) {
  std::vector<GridPoint> grid;
  auto point = [&](std::string name) -> RunConfig& {
    grid.push_back({std::move(name), base});
    return grid.back().config;
  };
  if (axis == "rollout_steps") {
    for (std::size_t s = 1; s <= 5; ++s) point("S" + std::to_string(s)).model.ewm.steps = s;
  } else if (axis == "n_base") {
    for (std::size_t n : {1, 2, 4, 8, 16}) point("Nb" + std::to_string(n)).model.ewm.n_base = n;
  } else if (axis == "p_drop") {
    for (double p : {0.0, 0.15, 0.30}) point("pdrop" + fmt(p)).model.ewm.p_drop = p;
  } else if (axis == "lambda_img") {
    for (double l : {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0}) point("lambda" + fmt(l)).model.ewm.lambda_img = l;
  } else if (axis == "imagination_mode") {
    for (auto m : {ImaginationMode::SelfOnly, ImaginationMode::CrossOnly, ImaginationMode::Cross})
      point(imagination_mode_name(m)).model.ewm.mode = m;
  } else if (axis == "rollout_context") {
    for (auto m : {RolloutContext::Accumulate, RolloutContext::LatestOnly})
      point(rollout_context_name(m)).model.ewm.rollout_context = m;
  } else if (axis == "keep_ratio") {
    auto& c = point("keep_ratio");
    c.eval.kappas = {1.0, 0.7, 0.5, 0.3, 0.1};
    c.eval.modes = {CorruptionMode::None, CorruptionMode::DropAudio, CorruptionMode::DropVideo};
  } else {
    std::string names;
    for (const auto& a : sweep_axes()) names += (names.empty() ? "" : ", ") + a;
    throw ConfigError("unknown sweep axis '" + axis + "' (expected one of: " + names + ")");
  }
  return grid;
}

std::vector<GridResult> run_grid(const std::vector<GridPoint>& points, const std::vector<std::uint64_t>& seeds,
                                 const Dataset& dataset, const std::filesystem::path& out_dir, std::size_t threads) {
  if (points.empty() || seeds.empty()) throw ConfigError("run_grid: empty grid");
  std::vector<GridResult> results;
  for (const auto& p : points) {
    for (auto seed : seeds) {
      GridResult r{p.name, seed, p.config, {}};
      r.config.seed = seed;
      r.config.finalize();
      results.push_back(std::move(r));
    }
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= results.size()) return;
      try {
        auto& r = results[i];
        r.result = run_experiment(r.config, dataset);
        if (!out_dir.empty()) {
          write_run_outputs(out_dir / r.name / ("seed" + std::to_string(r.seed)), r.config, r.result);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = results.size();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, results.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

void write_grid_summary(const std::filesystem::path& path, const std::vector<GridResult>& results,
                        const std::string& baseline) {
  if (results.empty()) throw ContractError("write_grid_summary: no results");
  const std::string& base = baseline.empty() ? results.front().name : baseline;
  CsvWriter csv(path, {"name", "seed", "config_hash", "modality", "kappa", "accuracy", "weighted_f1",
                       "delta_accuracy"});
  for (const auto& r : results) {
    const GridResult* ref = nullptr;
    for (const auto& b : results)
      if (b.name == base && b.seed == r.seed) ref = &b;
    for (const auto& e : r.result.evals) {
      std::string delta;
      if (ref) {
        for (const auto& be : ref->result.evals)
          if (be.mode == e.mode && be.kappa == e.kappa) delta = fmt(e.accuracy - be.accuracy);
      }
      csv.row({r.name, fmt(static_cast<std::size_t>(r.seed)), r.result.config_hash, corruption_name(e.mode),
               fmt(e.kappa), fmt(e.accuracy), fmt(e.weighted_f1), delta});
    }
  }
}

void write_fidelity_summary(const std::filesystem::path& path, const std::vector<GridResult>& results) {
  CsvWriter csv(path, {"name", "seed", "steps", "step", "cosine", "mse"});
  for (const auto& r : results) {
    if (!r.result.fidelity) continue;
    const auto& f = *r.result.fidelity;
    for (std::size_t s = 0; s < f.cosine.size(); ++s) {
      csv.row({r.name, fmt(static_cast<std::size_t>(r.seed)), fmt(f.cosine.size()), fmt(s + 1), fmt(f.cosine[s]),
               fmt(f.mse[s])});
    }
  }
}

}  // namespace ewmlab
