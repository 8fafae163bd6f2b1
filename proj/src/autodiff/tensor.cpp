#include "facecap/autodiff/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace facecap::ad {

template <typename T>
Tensor<T>::Tensor(std::size_t rows, std::size_t cols, T fill)
    : shape{rows, cols}, data(rows * cols, fill) {}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s, std::vector<T> d)
    : shape(std::move(s)), data(std::move(d)) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != data.size()) {
    throw ShapeError("tensor " + shape_string() + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(data.size()));
  }
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (shape.size() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_string());
  return shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (shape.size() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_string());
  return shape[1];
}

template <typename T>
std::string Tensor<T>::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Parameter<T>::Parameter(std::string n, Tensor<T> v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape, std::vector<T>(value.size())) {}

template <typename T>
void Parameter<T>::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor<T>(value.shape, std::vector<T>(value.size()));
  std::fill(grad.data.begin(), grad.data.end(), T(0));
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<std::size_t> inputs,
                       Backward backward) {
  return record(std::move(value), std::vector<std::size_t>(inputs), std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<std::size_t>& inputs,
                       Backward backward) {
  Node n;
  n.value = std::move(value);
  for (std::size_t id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
std::vector<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor<T>(n.value.shape, std::vector<T>(n.value.size()));
  return Tensor<T>(n.value.shape, n.grad);
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + nodes_[loss.id].value.shape_string());
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss.id)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      Parameter<T>& p = *n.param;
      if (p.grad.shape != p.value.shape) p.zero_grad();
      for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad.data[k] += n.grad[k];
    }
  }
}

template struct Tensor<float>;
template struct Tensor<double>;
template struct Parameter<float>;
template struct Parameter<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace facecap::ad
