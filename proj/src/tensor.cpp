#include "vitmimo/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "vitmimo/errors.hpp"

namespace vitmimo::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Eigen::VectorXd values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  for (auto s : shape) {
    if (s == 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a zero extent");
  }
  if (shape_size(shape) != static_cast<std::size_t>(values.size())) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = static_cast<Eigen::Index>(shape_size(shape));
  return Tensor(std::move(shape), Eigen::VectorXd::Constant(n, value), requires_grad);
}

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values,
                           bool requires_grad) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value) {
  return Tensor({1}, Eigen::VectorXd::Constant(1, value));
}

Tensor Tensor::from_op(Shape shape, Eigen::VectorXd values, std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool track = false;
  for (const auto& p : parents) track = track || p.requires_grad();
  if (!track) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

std::size_t Tensor::rows() const {
  if (dim() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (dim() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape()));
  return node_->shape[1];
}

ConstMatrixMap Tensor::matrix() const {
  return ConstMatrixMap(node_->value.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::backward() {
  if (size() != 1) throw DimensionError("backward() needs a scalar, got " + shape_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
  for (detail::Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad.resize(0);
    }
  }
}

Tensor Tensor::detach() const {
  Tensor out;
  out.node_ = std::make_shared<detail::Node>();
  out.node_->shape = node_->shape;
  out.node_->value = node_->value;
  return out;
}

Tensor Tensor::clone(bool requires_grad) const {
  Tensor out = detach();
  out.node_->requires_grad = requires_grad;
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool all_finite(const Tensor& t) { return t.values().allFinite(); }

}  // namespace vitmimo::nn
