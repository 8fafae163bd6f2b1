#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "facecap/autodiff/tensor.hpp"

namespace facecap::ad {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created on the first step and
/// must keep matching the parameter shapes afterwards.
template <typename T>
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  /// Updates each parameter from its accumulated gradient.
  void step(std::span<Parameter<T>* const> params);

  /// Same update from explicit gradients, one per parameter.
  void step(std::span<Parameter<T>* const> params, std::span<const Tensor<T>> grads);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace facecap::ad
