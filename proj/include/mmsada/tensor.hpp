#pragma once

// Reverse-mode differentiable tensors.
//
// A Tensor is a shared handle onto a graph node holding row-major float64
// values. Results of ops that touch a requires_grad input keep their parents
// alive and know how to push an upstream gradient back into them. Graphs are
// not thread-safe; build and differentiate each graph on a single thread.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmsada {

using Shape = std::vector<std::size_t>;

enum class Mode { train, eval };

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  // Receives the gradient of the loss with respect to this op's output.
  using BackwardFn = std::function<void(std::span<const double> upstream)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds an op result. `backward` is dropped (and parents released) when no
  // parent requires a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  // Empty span until a gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();
  // Adds `g` into this tensor's gradient, allocating it on first use.
  void accumulate_grad(std::span<const double> g) const;

  // Leaf copy of the values, detached from any graph.
  Tensor detach() const;
  // Deep copy keeping requires_grad but not the gradient.
  Tensor clone() const;

  bool is_same(const Tensor& other) const noexcept { return node_ == other.node_; }

  friend void backward(const Tensor& loss);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode accumulation from a scalar loss into every reachable
// requires_grad leaf. Leaf gradients accumulate across calls until zero_grad.
void backward(const Tensor& loss);

}  // namespace mmsada
