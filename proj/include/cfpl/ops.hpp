#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfpl/tensor.hpp"

namespace cfpl {

// Elementwise arithmetic with right-aligned (NumPy-style) broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// tanh approximation
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::size_t a, std::size_t b);
Tensor unsqueeze(const Tensor& x, std::size_t axis);
Tensor expand(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices);

// a: [..., m, k]; b: [k, n] or [..., k, n] with identical leading extents.
Tensor matmul(const Tensor& a, const Tensor& b);
// a @ b^T over the last two axes; b: [n, k] or [..., n, k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x: [..., in], weight: [out, in], bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis; gain/bias extents equal that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
// Mean over the batch of -log softmax(logits)[label]; logits [B, K].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace cfpl
