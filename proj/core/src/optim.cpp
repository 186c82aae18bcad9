#include "ewmlab/optim.hpp"

#include <cmath>
#include <numbers>

#include "ewmlab/errors.hpp"

namespace ewmlab {

double LrSchedule::at(std::size_t step) const {
  const auto total = std::max<std::size_t>(total_steps, 1);
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total)));
  if (step < warmup) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const auto span = std::max<std::size_t>(total - std::min(warmup, total), 1);
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParameterStore& store, AdamWConfig config, LrSchedule schedule)
    : store_(store), config_(config), schedule_(schedule) {
  const auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    index_.push_back(i);
    m_.emplace_back(entries[i].tensor.size(), 0.0);
    v_.emplace_back(entries[i].tensor.size(), 0.0);
  }
}

void AdamW::step() {
  auto& entries = store_.entries();
  for (auto i : index_) {
    if (!entries[i].tensor.has_grad()) {
      throw ContractError("AdamW: parameter '" + entries[i].name + "' has no gradient");
    }
  }
  double clip_factor = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto i : index_)
      for (double g : entries[i].tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip_factor = config_.clip_norm / norm;
  }

  const double lr = schedule_.at(step_);
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < index_.size(); ++k) {
    auto& p = entries[index_[k]];
    auto w = p.tensor.mutable_data();
    const auto g = p.tensor.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    const double decay = p.decay ? config_.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip_factor;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      w[j] -= lr * decay * w[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
    }
  }
}

}  // namespace ewmlab
