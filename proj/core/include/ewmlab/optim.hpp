#pragma once

#include <cstddef>
#include <vector>

#include "ewmlab/params.hpp"

namespace ewmlab {

// Linear warmup over the first `warmup_fraction` of steps, then cosine decay to 0.
struct LrSchedule {
  double base_lr = 2e-4;
  double warmup_fraction = 0.03;
  std::size_t total_steps = 1;

  double at(std::size_t step) const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Global L2 norm clip; <= 0 disables.
  double clip_norm = 1.0;
};

// First and second moments per trainable parameter, plus the step counter.
class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWConfig config, LrSchedule schedule);

  // Applies one update to every trainable parameter. Throws ContractError
  // naming the parameter if one lacks a gradient.
  void step();

  std::size_t step_count() const { return step_; }
  double current_lr() const { return schedule_.at(step_ == 0 ? 0 : step_ - 1); }
  const AdamWConfig& config() const { return config_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterStore& store_;
  AdamWConfig config_;
  LrSchedule schedule_;
  std::size_t step_ = 0;
  std::vector<std::size_t> index_;  // positions of trainable params in the store
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace ewmlab
