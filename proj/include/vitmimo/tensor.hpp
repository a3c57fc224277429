#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace vitmimo::nn {

using Shape = std::vector<std::size_t>;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  Eigen::VectorXd& grad_buffer() {
    if (grad.size() != value.size()) grad = Eigen::VectorXd::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

// Handle to a node of the dynamically recorded computation graph. Copies
// share storage; use clone() for an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Eigen::VectorXd values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  // Result of a differentiable op. Parents and the backward closure are only
  // recorded when gradient tracking is enabled and some parent needs a grad.
  static Tensor from_op(Shape shape, Eigen::VectorXd values,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return static_cast<std::size_t>(node_->value.size()); }
  std::size_t rows() const;
  std::size_t cols() const;

  const Eigen::VectorXd& values() const { return node_->value; }
  // In-place access for leaves (optimizer updates, finite differences).
  Eigen::VectorXd& mutable_values() { return node_->value; }
  ConstMatrixMap matrix() const;
  double item() const;
  double at(std::size_t i) const { return node_->value[static_cast<Eigen::Index>(i)]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Eigen::VectorXd& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0); }

  // Reverse pass from a scalar. Leaf grads accumulate; the recorded graph
  // is released afterwards.
  void backward();

  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool all_finite(const Tensor& t);

}  // namespace vitmimo::nn
