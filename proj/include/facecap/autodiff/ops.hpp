#pragma once

// Differentiable primitives. All operands must live on the same tape.

#include <cstddef>
#include <vector>

#include "facecap/autodiff/tensor.hpp"

namespace facecap::ad {

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// Same shape, or b is 1 x cols and broadcasts over the rows of a.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
/// Elementwise product of same-shaped operands.
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
/// 1 x 1 results.
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
/// axis 0 stacks rows, axis 1 stacks columns.
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, int axis);
template <typename T> Var<T> slice(Var<T> a, int axis, std::size_t begin, std::size_t count);
template <typename T> Var<T> transpose(Var<T> a);
/// Row-wise normalisation with 1 x cols gain and bias.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
template <typename T> Var<T> softmax(Var<T> a, int axis);
/// Exact (erf) form.
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> relu(Var<T> a);
/// x W + b with W in x out and b 1 x out.
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);
/// mean |pred - target|, 1 x 1.
template <typename T> Var<T> l1_loss(Var<T> pred, Var<T> target);

}  // namespace facecap::ad
