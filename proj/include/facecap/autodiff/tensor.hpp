#pragma once

// Dense row-major tensors and a reverse-mode tape.
//
// Operations work on rank-2 tensors (rows x cols); a vector is 1 x n.
// Instantiated for float and double.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace facecap::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0));
  Tensor(std::vector<std::size_t> shape, std::vector<T> data);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  T at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  std::string shape_string() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool operator==(const Tensor&) const = default;
};

/// Trainable value with a persistent gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string name, Tensor<T> value);

  void zero_grad();
};

template <typename T>
class Tape;

/// Handle to a tape node.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// No gradient flows into constants.
  Var<T> constant(Tensor<T> value);
  /// Gradient-tracked leaf; read it back with grad() after backward().
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to `p`; backward() adds its gradient into p.grad.
  Var<T> parameter(Parameter<T>& p);

  /// Appends an operation result. `backward` runs only when some input
  /// tracks gradients.
  Var<T> record(Tensor<T> value, std::initializer_list<std::size_t> inputs, Backward backward);
  Var<T> record(Tensor<T> value, const std::vector<std::size_t>& inputs, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-filled on first access.
  std::vector<T>& grad_buffer(std::size_t id);
  /// Gradient of a node as a tensor (zeros when nothing flowed into it).
  Tensor<T> grad(Var<T> v) const;

  /// Reverse pass from a 1 x 1 loss. Throws ShapeError for a non-scalar loss.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

}  // namespace facecap::ad
