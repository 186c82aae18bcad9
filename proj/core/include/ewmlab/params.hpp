#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ewmlab/tensor.hpp"

namespace ewmlab {

struct InitSpec {
  enum class Kind { Gaussian, Zeros, Constant };
  Kind kind = Kind::Zeros;
  double value = 0.0;  // std for Gaussian, fill value for Constant

  static InitSpec gaussian(double std) { return {Kind::Gaussian, std}; }
  static InitSpec zeros() { return {Kind::Zeros, 0.0}; }
  static InitSpec constant(double v) { return {Kind::Constant, v}; }
};

struct Parameter {
  std::string name;
  Tensor tensor;
  InitSpec init;
  bool trainable = true;
  // Excluded from weight decay: biases, norms, embeddings, scalars.
  bool decay = true;
};

// Named, ordered parameter registry. Each parameter's initial value depends
// only on (seed, name), so adding parameters never perturbs existing ones.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor add(const std::string& name, Shape shape, InitSpec init, bool decay = true);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Parameter& entry(const std::string& name);

  std::vector<Parameter>& entries() { return params_; }
  const std::vector<Parameter>& entries() const { return params_; }

  // Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);
  std::vector<Tensor> trainable_tensors() const;
  std::size_t parameter_count(bool trainable_only = false) const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

  // Re-draws a parameter from its init spec with an explicit seed.
  void reinitialize(const std::string& name, std::uint64_t seed);

 private:
  std::uint64_t seed_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ewmlab
