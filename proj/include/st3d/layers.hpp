#pragma once

#include <array>
#include <optional>
#include <vector>

#include "st3d/rng.hpp"
#include "st3d/tensor.hpp"
#include "st3d/tensor_ops.hpp"

namespace st3d::nn {

enum class Mode { train, eval };

using Dims3 = std::array<int64_t, 3>;  // (T, H, W) order

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

// 3D convolution over [N, C, T, H, W], weights [out_ch, in_ch, kT, kH, kW].
// Lowered to im2col + gemm, tiled per (sample, output time slice) so the
// column buffer stays at K x (H'*W'). Bias is off by default; every conv in
// this architecture is followed by batch norm.
template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int64_t in_ch, int64_t out_ch, Dims3 kernel, Dims3 stride,
         Dims3 pad, bool with_bias = false);

  void init(Rng& rng);  // He-scaled weights, fan_in = in_ch * kT*kH*kW

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  // Uses the input cached by a train-mode forward; fills grad_weight (and
  // grad_bias when present) and returns grad wrt input.
  Tensor<T> backward(const Tensor<T>& grad_out);

  Shape output_shape(const Shape& in_shape) const;
  int64_t param_count() const;

  int64_t in_ch = 0, out_ch = 0;
  Dims3 kernel{}, stride{}, pad{};
  bool has_bias = false;
  Tensor<T> weight, bias;
  Tensor<T> grad_weight, grad_bias;

 private:
  Tensor<T> cached_input_;
};

// Per-channel batch norm over (N, T, H, W) with biased batch variance;
// running stats follow running <- (1 - momentum)*running + momentum*batch.
template <typename T>
class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  explicit BatchNorm3d(int64_t channels, T eps = T(1e-5), T momentum = T(0.1));

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  // Returns grad_input; fills grad_gamma / grad_beta.
  Tensor<T> backward(const Tensor<T>& grad_out);

  int64_t channels = 0;
  T eps = T(1e-5);
  T momentum = T(0.1);
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  Tensor<T> grad_gamma, grad_beta;

 private:
  Tensor<T> cached_input_;
  std::vector<T> batch_mean_, batch_inv_std_;
};

template <typename T>
class MaxPool3d {
 public:
  MaxPool3d() = default;
  MaxPool3d(Dims3 kernel, Dims3 stride, Dims3 pad);

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);

  Shape output_shape(const Shape& in_shape) const;

  Dims3 kernel{}, stride{}, pad{};

 private:
  Shape cached_in_shape_;
  Tensor<int64_t> argmax_;  // flat input offset per output element
};

template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& input, Mode mode);  // [N,C,T,H,W] -> [N,C]
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Shape cached_in_shape_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);  // gradient at 0 is 0

 private:
  Tensor<T> cached_input_;
};

template <typename T>
class FullyConnected {
 public:
  FullyConnected() = default;
  FullyConnected(int64_t in_features, int64_t out_features);

  void init(Rng& rng);  // He weights (fan_in = in_features), zero bias

  Tensor<T> forward(const Tensor<T>& input, Mode mode);  // [N,in] -> [N,out]
  Tensor<T> backward(const Tensor<T>& grad_out);

  int64_t param_count() const { return weight.numel() + bias.numel(); }

  int64_t in_features = 0, out_features = 0;
  Tensor<T> weight, bias;  // weight [out, in]
  Tensor<T> grad_weight, grad_bias;

 private:
  Tensor<T> cached_input_;
};

template <typename T>
struct SoftmaxXentResult {
  T loss;                 // mean over the batch
  Tensor<T> grad_logits;  // (probs - onehot) / N
  Tensor<T> probs;
};

// Numerically stable log-sum-exp softmax with mean cross-entropy loss.
template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                           const std::vector<int64_t>& labels);

// Row-wise softmax (used on its own by inference).
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace st3d::nn
