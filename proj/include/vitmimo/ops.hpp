#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vitmimo/tensor.hpp"

namespace vitmimo::nn {

// a[m x n] * b[n x p]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);

// x[l x d] + bias[d] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// Exact-erf GeLU: 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);

// Row-wise normalization to zero mean and unit variance, then gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Max-subtracted softmax over each row.
Tensor softmax_rows(const Tensor& x);

// Row i of the result is table row indices[i]; grads scatter-add.
Tensor embed_lookup(const Tensor& table, std::span<const std::size_t> indices);

// Horizontal concatenation of matrices with equal row counts.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);

// out.flat[i] = x.flat[source[i]]; grads scatter-add back.
Tensor gather(const Tensor& x, std::span<const std::size_t> source, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Rescales x so that ||x||_2 == target_norm. Throws NumericError on a zero input.
Tensor scale_to_norm(const Tensor& x, double target_norm);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace vitmimo::nn
