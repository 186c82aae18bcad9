#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ewmlab/config.hpp"
#include "ewmlab/trainer.hpp"

namespace ewmlab {

struct GridPoint {
  std::string name;
  RunConfig config;
};

// Rows (a)-(f): LoRA only, + truncation, + imagination (pooled imagined
// beliefs at one position), + MAMA, + interleaved placement, + boundary
// residual (the full model).
std::vector<GridPoint> component_ablation_grid(const RunConfig& base);

// Belief-construction variants: none, random, pooling, ewm.
std::vector<GridPoint> belief_source_grid(const RunConfig& base);

// Axis names accepted by sweep_grid().
const std::vector<std::string>& sweep_axes();

// One grid point per axis value; every other setting is taken from `base`.
// The keep_ratio axis is a single training run evaluated over the
// kappa x modality grid.
std::vector<GridPoint> sweep_grid(const RunConfig& base, const std::string& axis);

struct GridResult {
  std::string name;
  std::uint64_t seed = 0;
  RunConfig config;
  RunResult result;
};

// Trains every (point, seed) pair on the same dataset. Seeds replace
// config.seed; the world seed is shared so the runs are paired. Up to
// `threads` runs execute concurrently. When `out_dir` is non-empty each run
// writes its files to out_dir/<name>/seed<k>/.
std::vector<GridResult> run_grid(const std::vector<GridPoint>& points, const std::vector<std::uint64_t>& seeds,
                                 const Dataset& dataset, const std::filesystem::path& out_dir,
                                 std::size_t threads = 1);

// One row per (point, seed, modality, kappa) with the accuracy delta against
// the same scenario and seed of `baseline` (empty: first point).
void write_grid_summary(const std::filesystem::path& path, const std::vector<GridResult>& results,
                        const std::string& baseline = "");

// Per-step imagination fidelity for every run that has one.
void write_fidelity_summary(const std::filesystem::path& path, const std::vector<GridResult>& results);

}  // namespace ewmlab
