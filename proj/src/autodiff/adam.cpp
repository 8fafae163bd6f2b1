#include "facecap/autodiff/adam.hpp"

#include <cmath>

namespace facecap::ad {

template <typename T>
void AdamState<T>::step(std::span<Parameter<T>* const> params) {
  std::vector<Tensor<T>> grads;
  grads.reserve(params.size());
  for (const auto* p : params) grads.push_back(p->grad);
  step(params, grads);
}

template <typename T>
void AdamState<T>::step(std::span<Parameter<T>* const> params, std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.shape, std::vector<T>(p->value.size()));
      v_.emplace_back(p->value.shape, std::vector<T>(p->value.size()));
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(grads[i]) || !m_[i].same_shape(grads[i])) {
      throw ShapeError("adam: parameter '" + params[i]->name + "' " +
                       params[i]->value.shape_string() + " vs gradient " + grads[i].shape_string());
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.data;
    const auto& g = grads[i].data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      w[k] = static_cast<T>(w[k] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace facecap::ad
