#pragma once

#include <utility>
#include <vector>

#include "st3d/rng.hpp"
#include "st3d/tensor.hpp"

namespace st3d {

enum class EwOp { add, sub, mul, scale, relu };

// Tensor-tensor pointwise op (add/sub/mul); shapes must match exactly.
template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, const Tensor<T>& b);
// Tensor-scalar (scale) and unary (relu, scalar ignored) forms.
template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, T scalar = T(0));

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::mul, a, b);
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return elementwise(EwOp::scale, a, s);
}

// Rank-2 [m,k] x [k,n] -> [m,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

enum class ReduceKind { sum, mean };

// Reduces over the given axes (distinct, in range); reduced axes are
// removed from the shape. Reducing every axis yields shape (1).
template <typename T>
Tensor<T> reduce(const Tensor<T>& t, const std::vector<int64_t>& axes,
                 ReduceKind kind);

template <typename T>
struct MaxReduceResult {
  Tensor<T> values;
  // Row-major flat index within the reduced subspace of the first maximizer.
  Tensor<int64_t> indices;
};

template <typename T>
MaxReduceResult<T> reduce_max(const Tensor<T>& t,
                              const std::vector<int64_t>& axes);

// Zero-pads each axis by (before, after), then keeps every step-th element
// starting at padded index 0. Output extent per axis:
//   floor((extent + before + after - 1) / step) + 1
template <typename T>
Tensor<T> pad_and_slice(const Tensor<T>& t,
                        const std::vector<std::pair<int64_t, int64_t>>& pads,
                        const std::vector<int64_t>& steps);

// Transpose of pad_and_slice as a linear map: scatters grad_out back onto
// the sampled positions of the original extents, zero elsewhere.
template <typename T>
Tensor<T> pad_and_slice_backward(
    const Tensor<T>& grad_out, const Shape& in_shape,
    const std::vector<std::pair<int64_t, int64_t>>& pads,
    const std::vector<int64_t>& steps);

// Zero-mean Gaussian with variance 2/fan_in (rectifier scaling). Values are
// drawn in double and cast, so both precisions see the same stream.
template <typename T>
Tensor<T> init_weights(Shape shape, int64_t fan_in, Rng& rng);

}  // namespace st3d
