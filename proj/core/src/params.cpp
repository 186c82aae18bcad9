#include "ewmlab/params.hpp"

#include "ewmlab/errors.hpp"
#include "ewmlab/random.hpp"

namespace ewmlab {

namespace {

std::vector<double> draw(const InitSpec& init, std::size_t n, std::uint64_t seed) {
  std::vector<double> values(n, 0.0);
  switch (init.kind) {
    case InitSpec::Kind::Gaussian: {
      Rng rng(seed);
      std::normal_distribution<double> normal(0.0, init.value);
      for (auto& v : values) v = normal(rng);
      break;
    }
    case InitSpec::Kind::Constant:
      values.assign(n, init.value);
      break;
    case InitSpec::Kind::Zeros:
      break;
  }
  return values;
}

}  // namespace

Tensor ParameterStore::add(const std::string& name, Shape shape, InitSpec init, bool decay) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  const auto n = numel(shape);
  Tensor t(std::move(shape), draw(init, n, mix_seed(seed_, hash_name(name))), true);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, t, init, true, decay});
  return t;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].tensor;
}

Parameter& ParameterStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) {
      p.trainable = trainable;
      p.tensor.set_requires_grad(trainable);
    }
  }
}

std::vector<Tensor> ParameterStore::trainable_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

std::size_t ParameterStore::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p.trainable) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterStore::reinitialize(const std::string& name, std::uint64_t seed) {
  auto& p = entry(name);
  auto values = draw(p.init, p.tensor.size(), seed);
  auto dst = p.tensor.mutable_data();
  std::copy(values.begin(), values.end(), dst.begin());
}

}  // namespace ewmlab
