#include "vitmimo/ops.hpp"

#include <cmath>
#include <numbers>

#include "vitmimo/errors.hpp"

namespace vitmimo::nn {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

MatrixMap as_matrix(Eigen::VectorXd& v, std::size_t r, std::size_t c) {
  return MatrixMap(v.data(), idx(r), idx(c));
}

ConstMatrixMap as_matrix(const Eigen::VectorXd& v, std::size_t r, std::size_t c) {
  return ConstMatrixMap(v.data(), idx(r), idx(c));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// Parent node i, when it takes a gradient.
detail::Node* parent_needing_grad(detail::Node& n, std::size_t i) {
  detail::Node* p = n.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                         " * " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  Eigen::VectorXd out(idx(m * p));
  as_matrix(out, m, p).noalias() = a.matrix() * b.matrix();
  return Tensor::from_op({m, p}, std::move(out), {a, b}, [m, n, p](detail::Node& self) {
    auto g = as_matrix(self.grad, m, p);
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* pa = parent_needing_grad(self, 0)) {
      as_matrix(pa->grad_buffer(), m, n).noalias() += g * as_matrix(bv, n, p).transpose();
    }
    if (auto* pb = parent_needing_grad(self, 1)) {
      as_matrix(pb->grad_buffer(), n, p).noalias() += as_matrix(av, m, n).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Eigen::VectorXd out(idx(r * c));
  as_matrix(out, c, r) = a.matrix().transpose();
  return Tensor::from_op({c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    as_matrix(self.parents[0]->grad_buffer(), r, c) += as_matrix(self.grad, c, r).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return Tensor::from_op(a.shape(), a.values() + b.values(), {a, b}, [](detail::Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (auto* p = parent_needing_grad(self, i)) p->grad_buffer() += self.grad;
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return Tensor::from_op(a.shape(), a.values() - b.values(), {a, b}, [](detail::Node& self) {
    if (auto* p = parent_needing_grad(self, 0)) p->grad_buffer() += self.grad;
    if (auto* p = parent_needing_grad(self, 1)) p->grad_buffer() -= self.grad;
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return Tensor::from_op(a.shape(), a.values() * factor, {a}, [factor](detail::Node& self) {
    self.parents[0]->grad_buffer() += factor * self.grad;
  });
}

Tensor square(const Tensor& a) {
  return Tensor::from_op(a.shape(), a.values().array().square().matrix(), {a},
                         [](detail::Node& self) {
                           auto* p = self.parents[0].get();
                           p->grad_buffer().array() += 2.0 * p->value.array() * self.grad.array();
                         });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_bias");
  if (bias.size() != x.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) +
                         " does not match " + shape_string(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  Eigen::VectorXd out = x.values();
  as_matrix(out, r, c).rowwise() += bias.values().transpose();
  return Tensor::from_op(x.shape(), std::move(out), {x, bias}, [r, c](detail::Node& self) {
    if (auto* px = parent_needing_grad(self, 0)) px->grad_buffer() += self.grad;
    if (auto* pb = parent_needing_grad(self, 1)) {
      pb->grad_buffer() += as_matrix(self.grad, r, c).colwise().sum().transpose();
    }
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Eigen::VectorXd out = x.values().unaryExpr([](double v) { return gelu_value(v); });
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto* p = self.parents[0].get();
    p->grad_buffer().array() +=
        p->value.unaryExpr([](double v) { return gelu_derivative(v); }).array() *
        self.grad.array();
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  const auto xm = x.matrix();
  RowMatrix normed(idx(r), idx(c));
  Eigen::VectorXd inv_std(idx(r));
  for (Index i = 0; i < idx(r); ++i) {
    const double mu = xm.row(i).mean();
    const double var = (xm.row(i).array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    normed.row(i) = (xm.row(i).array() - mu) * inv_std[i];
  }
  Eigen::VectorXd out(idx(r * c));
  auto om = as_matrix(out, r, c);
  om = normed;
  om.array().rowwise() *= gain.values().transpose().array();
  om.rowwise() += bias.values().transpose();
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gain, bias},
      [r, c, normed = std::move(normed), inv_std = std::move(inv_std)](detail::Node& self) {
        const auto g = as_matrix(self.grad, r, c);
        const auto& gv = self.parents[1]->value;
        if (auto* px = parent_needing_grad(self, 0)) {
          auto gx = as_matrix(px->grad_buffer(), r, c);
          const double n = static_cast<double>(c);
          for (Index i = 0; i < idx(r); ++i) {
            const Eigen::RowVectorXd dn = g.row(i).array() * gv.transpose().array();
            const double mean_dn = dn.mean();
            const double mean_dn_n = (dn.array() * normed.row(i).array()).sum() / n;
            gx.row(i).array() +=
                inv_std[i] * (dn.array() - mean_dn - normed.row(i).array() * mean_dn_n);
          }
        }
        if (auto* pg = parent_needing_grad(self, 1)) {
          pg->grad_buffer() += (g.array() * normed.array()).colwise().sum().transpose().matrix();
        }
        if (auto* pb = parent_needing_grad(self, 2)) {
          pb->grad_buffer() += g.colwise().sum().transpose();
        }
      });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Eigen::VectorXd out(idx(r * c));
  auto om = as_matrix(out, r, c);
  const auto xm = x.matrix();
  for (Index i = 0; i < idx(r); ++i) {
    om.row(i) = (xm.row(i).array() - xm.row(i).maxCoeff()).exp();
    om.row(i) /= om.row(i).sum();
  }
  return Tensor::from_op(x.shape(), out, {x}, [r, c, out](detail::Node& self) {
    const auto y = as_matrix(out, r, c);
    const auto g = as_matrix(self.grad, r, c);
    auto gx = as_matrix(self.parents[0]->grad_buffer(), r, c);
    for (Index i = 0; i < idx(r); ++i) {
      const double dot = y.row(i).dot(g.row(i));
      gx.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
    }
  });
}

Tensor embed_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  require_matrix(table, "embed_lookup");
  const std::size_t rows = table.rows(), d = table.cols();
  if (indices.empty()) throw DimensionError("embed_lookup: empty index list");
  for (std::size_t i : indices) {
    if (i >= rows) {
      throw IndexError("embed_lookup: index " + std::to_string(i) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
  }
  std::vector<std::size_t> ids(indices.begin(), indices.end());
  const std::size_t n = ids.size();
  Eigen::VectorXd out(idx(n * d));
  auto om = as_matrix(out, n, d);
  const auto tm = table.matrix();
  for (std::size_t i = 0; i < n; ++i) om.row(idx(i)) = tm.row(idx(ids[i]));
  return Tensor::from_op({n, d}, std::move(out), {table},
                         [ids = std::move(ids), rows, d](detail::Node& self) {
                           auto gt = as_matrix(self.parents[0]->grad_buffer(), rows, d);
                           const auto g = as_matrix(self.grad, ids.size(), d);
                           for (std::size_t i = 0; i < ids.size(); ++i) {
                             gt.row(idx(ids[i])) += g.row(idx(i));
                           }
                         });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  Eigen::VectorXd out(idx(r * total));
  auto om = as_matrix(out, r, total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    om.middleCols(idx(offset), idx(p.cols())) = p.matrix();
    offset += p.cols();
  }
  return Tensor::from_op({r, total}, std::move(out), {parts.begin(), parts.end()},
                         [r, total, widths = std::move(widths)](detail::Node& self) {
                           const auto g = as_matrix(self.grad, r, total);
                           std::size_t off = 0;
                           for (std::size_t i = 0; i < widths.size(); ++i) {
                             if (auto* p = parent_needing_grad(self, i)) {
                               as_matrix(p->grad_buffer(), r, widths[i]) +=
                                   g.middleCols(idx(off), idx(widths[i]));
                             }
                             off += widths[i];
                           }
                         });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_cols(std::span<const Tensor>(parts));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  return Tensor::from_op(std::move(shape), x.values(), {x}, [](detail::Node& self) {
    self.parents[0]->grad_buffer() += self.grad;
  });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> source, Shape shape) {
  if (shape_size(shape) != source.size()) {
    throw DimensionError("gather: " + std::to_string(source.size()) + " indices for shape " +
                         shape_string(shape));
  }
  Eigen::VectorXd out(idx(source.size()));
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= x.size()) {
      throw IndexError("gather: index " + std::to_string(source[i]) + " outside tensor of " +
                       std::to_string(x.size()) + " values");
    }
    out[idx(i)] = x.values()[idx(source[i])];
  }
  std::vector<std::size_t> ids(source.begin(), source.end());
  return Tensor::from_op(std::move(shape), std::move(out), {x},
                         [ids = std::move(ids)](detail::Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < ids.size(); ++i) {
                             g[idx(ids[i])] += self.grad[idx(i)];
                           }
                         });
}

Tensor sum(const Tensor& x) {
  return Tensor::from_op({1}, Eigen::VectorXd::Constant(1, x.values().sum()), {x},
                         [](detail::Node& self) {
                           self.parents[0]->grad_buffer().array() += self.grad[0];
                         });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor scale_to_norm(const Tensor& x, double target_norm) {
  const double norm = x.values().norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericError("scale_to_norm: input norm is " + std::to_string(norm));
  }
  const double factor = target_norm / norm;
  Eigen::VectorXd out = x.values() * factor;
  return Tensor::from_op(x.shape(), out, {x}, [factor, norm, out](detail::Node& self) {
    // d(t x/|x|) = (t/|x|)(I - u u^T), u = x/|x| = out/t
    const double proj = out.dot(self.grad) / (factor * norm * factor * norm);
    self.parents[0]->grad_buffer() += factor * (self.grad - proj * out);
  });
}

}  // namespace vitmimo::nn
