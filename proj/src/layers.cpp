#include "st3d/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "st3d/kernels.hpp"

namespace st3d::nn {

// ---------------- Conv3d ----------------

template <typename T>
Conv3d<T>::Conv3d(int64_t in_ch_, int64_t out_ch_, Dims3 kernel_,
                  Dims3 stride_, Dims3 pad_, bool with_bias)
    : in_ch(in_ch_),
      out_ch(out_ch_),
      kernel(kernel_),
      stride(stride_),
      pad(pad_),
      has_bias(with_bias) {
  ST3D_CHECK(in_ch >= 1 && out_ch >= 1, "conv3d: channel counts must be >= 1");
  for (int i = 0; i < 3; ++i) {
    ST3D_CHECK(kernel[i] >= 1 && stride[i] >= 1 && pad[i] >= 0,
               "conv3d: bad kernel/stride/pad on axis " << i);
  }
  weight = Tensor<T>({out_ch, in_ch, kernel[0], kernel[1], kernel[2]});
  grad_weight = Tensor<T>(weight.shape());
  if (has_bias) {
    bias = Tensor<T>({out_ch});
    grad_bias = Tensor<T>({out_ch});
  }
}

template <typename T>
void Conv3d<T>::init(Rng& rng) {
  const int64_t fan_in = in_ch * kernel[0] * kernel[1] * kernel[2];
  weight = init_weights<T>(weight.shape(), fan_in, rng);
}

template <typename T>
Shape Conv3d<T>::output_shape(const Shape& in_shape) const {
  ST3D_CHECK(in_shape.size() == 5,
             "conv3d: expects [N,C,T,H,W], got " << shape_str(in_shape));
  ST3D_CHECK(in_shape[1] == in_ch, "conv3d: input has " << in_shape[1]
                                                        << " channels, layer expects "
                                                        << in_ch);
  Shape out(5);
  out[0] = in_shape[0];
  out[1] = out_ch;
  for (int i = 0; i < 3; ++i) {
    out[2 + i] = conv_out_extent(in_shape[2 + i], kernel[i], stride[i], pad[i]);
    ST3D_CHECK(out[2 + i] >= 1, "conv3d: non-positive output extent on axis "
                                    << i << " for input " << shape_str(in_shape));
  }
  return out;
}

template <typename T>
int64_t Conv3d<T>::param_count() const {
  return weight.numel() + (has_bias ? bias.numel() : 0);
}

namespace {

// Fills one K x (H'*W') column tile for a fixed (sample, output t). Rows are
// (c, kt, kh, kw); columns are output (y, x). Out-of-range taps are zero.
template <typename T>
void im2col_tile(const T* in, int64_t C, int64_t Ti, int64_t Hi, int64_t Wi,
                 const Dims3& kernel, const Dims3& stride, const Dims3& pad,
                 int64_t to, int64_t Ho, int64_t Wo, T* col) {
  const int64_t P = Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    const T* in_c = in + c * Ti * Hi * Wi;
    for (int64_t kt = 0; kt < kernel[0]; ++kt) {
      const int64_t t_in = to * stride[0] + kt - pad[0];
      for (int64_t kh = 0; kh < kernel[1]; ++kh) {
        for (int64_t kw = 0; kw < kernel[2]; ++kw) {
          T* row = col + (((c * kernel[0] + kt) * kernel[1] + kh) * kernel[2] +
                          kw) *
                             P;
          if (t_in < 0 || t_in >= Ti) {
            std::fill(row, row + P, T(0));
            continue;
          }
          const T* in_t = in_c + t_in * Hi * Wi;
          for (int64_t y = 0; y < Ho; ++y) {
            T* dst = row + y * Wo;
            const int64_t h_in = y * stride[1] + kh - pad[1];
            if (h_in < 0 || h_in >= Hi) {
              std::fill(dst, dst + Wo, T(0));
              continue;
            }
            const T* src = in_t + h_in * Wi;
            if (stride[2] == 1) {
              // Valid x range, then a straight copy between zero runs.
              const int64_t x0 = std::max<int64_t>(0, pad[2] - kw);
              const int64_t x1 =
                  std::min<int64_t>(Wo, Wi + pad[2] - kw);
              for (int64_t x = 0; x < std::min<int64_t>(x0, Wo); ++x)
                dst[x] = T(0);
              if (x1 > x0)
                std::memcpy(dst + x0, src + x0 - pad[2] + kw,
                            static_cast<size_t>(x1 - x0) * sizeof(T));
              for (int64_t x = std::max<int64_t>(x1, 0); x < Wo; ++x)
                dst[x] = T(0);
            } else {
              for (int64_t x = 0; x < Wo; ++x) {
                const int64_t w_in = x * stride[2] + kw - pad[2];
                dst[x] = (w_in >= 0 && w_in < Wi) ? src[w_in] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

// Transpose of im2col_tile: scatter-adds a column tile back into the input
// gradient.
template <typename T>
void col2im_tile(const T* col, int64_t C, int64_t Ti, int64_t Hi, int64_t Wi,
                 const Dims3& kernel, const Dims3& stride, const Dims3& pad,
                 int64_t to, int64_t Ho, int64_t Wo, T* din) {
  const int64_t P = Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    T* din_c = din + c * Ti * Hi * Wi;
    for (int64_t kt = 0; kt < kernel[0]; ++kt) {
      const int64_t t_in = to * stride[0] + kt - pad[0];
      if (t_in < 0 || t_in >= Ti) continue;
      T* din_t = din_c + t_in * Hi * Wi;
      for (int64_t kh = 0; kh < kernel[1]; ++kh) {
        for (int64_t kw = 0; kw < kernel[2]; ++kw) {
          const T* row = col + (((c * kernel[0] + kt) * kernel[1] + kh) *
                                    kernel[2] +
                                kw) *
                                   P;
          for (int64_t y = 0; y < Ho; ++y) {
            const int64_t h_in = y * stride[1] + kh - pad[1];
            if (h_in < 0 || h_in >= Hi) continue;
            T* dst = din_t + h_in * Wi;
            const T* src = row + y * Wo;
            for (int64_t x = 0; x < Wo; ++x) {
              const int64_t w_in = x * stride[2] + kw - pad[2];
              if (w_in >= 0 && w_in < Wi) dst[w_in] += src[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& input, Mode mode) {
  const Shape out_shape = output_shape(input.shape());
  const int64_t N = input.extent(0);
  const int64_t Ti = input.extent(2), Hi = input.extent(3), Wi = input.extent(4);
  const int64_t To = out_shape[2], Ho = out_shape[3], Wo = out_shape[4];
  const int64_t K = in_ch * kernel[0] * kernel[1] * kernel[2];
  const int64_t P = Ho * Wo;

  Tensor<T> out(out_shape);
  std::vector<T> col(static_cast<size_t>(K * P));
  const int64_t in_stride_n = in_ch * Ti * Hi * Wi;
  const int64_t out_stride_n = out_ch * To * Ho * Wo;

  for (int64_t n = 0; n < N; ++n) {
    const T* in_n = input.data() + n * in_stride_n;
    for (int64_t to = 0; to < To; ++to) {
      im2col_tile(in_n, in_ch, Ti, Hi, Wi, kernel, stride, pad, to, Ho, Wo,
                  col.data());
      T* out_tile = out.data() + n * out_stride_n + to * P;
      kernels::gemm<T>(false, false, out_ch, P, K, T(1), weight.data(), K,
                       col.data(), P, T(0), out_tile, To * P);
    }
  }
  if (has_bias) {
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < out_ch; ++o) {
        T* plane = out.data() + n * out_stride_n + o * To * P;
        const T b = bias[o];
        for (int64_t i = 0; i < To * P; ++i) plane[i] += b;
      }
  }
  if (mode == Mode::train) cached_input_ = input;
  return out;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_input_.empty(),
             "conv3d: backward without a cached train-mode forward");
  const Tensor<T>& input = cached_input_;
  const Shape out_shape = output_shape(input.shape());
  ST3D_CHECK(grad_out.shape() == out_shape,
             "conv3d: grad_out shape " << shape_str(grad_out.shape())
                                       << " vs forward output "
                                       << shape_str(out_shape));

  const int64_t N = input.extent(0);
  const int64_t Ti = input.extent(2), Hi = input.extent(3), Wi = input.extent(4);
  const int64_t To = out_shape[2], Ho = out_shape[3], Wo = out_shape[4];
  const int64_t K = in_ch * kernel[0] * kernel[1] * kernel[2];
  const int64_t P = Ho * Wo;
  const int64_t in_stride_n = in_ch * Ti * Hi * Wi;
  const int64_t out_stride_n = out_ch * To * Ho * Wo;

  const auto& kt = kernels::table<T>();
  kt.fill(grad_weight.data(), T(0), grad_weight.numel());
  Tensor<T> grad_input(input.shape());

  std::vector<T> col(static_cast<size_t>(K * P));
  std::vector<T> dcol(static_cast<size_t>(K * P));

  for (int64_t n = 0; n < N; ++n) {
    const T* in_n = input.data() + n * in_stride_n;
    T* din_n = grad_input.data() + n * in_stride_n;
    for (int64_t to = 0; to < To; ++to) {
      const T* dout_tile = grad_out.data() + n * out_stride_n + to * P;
      im2col_tile(in_n, in_ch, Ti, Hi, Wi, kernel, stride, pad, to, Ho, Wo,
                  col.data());
      // dW[o,k] += sum_p dOut[o,p] * col[k,p]
      kernels::gemm<T>(false, true, out_ch, K, P, T(1), dout_tile, To * P,
                       col.data(), P, T(1), grad_weight.data(), K);
      // dcol[k,p] = sum_o W[o,k] * dOut[o,p]
      kernels::gemm<T>(true, false, K, P, out_ch, T(1), weight.data(), K,
                       dout_tile, To * P, T(0), dcol.data(), P);
      col2im_tile(dcol.data(), in_ch, Ti, Hi, Wi, kernel, stride, pad, to, Ho,
                  Wo, din_n);
    }
  }
  if (has_bias) {
    kt.fill(grad_bias.data(), T(0), grad_bias.numel());
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < out_ch; ++o)
        grad_bias[o] += kt.sum(grad_out.data() + n * out_stride_n + o * To * P,
                               To * P);
  }
  return grad_input;
}

// ---------------- BatchNorm3d ----------------

template <typename T>
BatchNorm3d<T>::BatchNorm3d(int64_t channels_, T eps_, T momentum_)
    : channels(channels_), eps(eps_), momentum(momentum_) {
  ST3D_CHECK(channels >= 1, "batchnorm3d: channels must be >= 1");
  ST3D_CHECK(eps > T(0), "batchnorm3d: eps must be positive");
  ST3D_CHECK(momentum > T(0) && momentum < T(1),
             "batchnorm3d: momentum must lie in (0,1)");
  gamma = Tensor<T>::full({channels}, T(1));
  beta = Tensor<T>({channels});
  running_mean = Tensor<T>({channels});
  running_var = Tensor<T>::full({channels}, T(1));
  grad_gamma = Tensor<T>({channels});
  grad_beta = Tensor<T>({channels});
}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward(const Tensor<T>& input, Mode mode) {
  ST3D_CHECK(input.rank() == 5 && input.extent(1) == channels,
             "batchnorm3d: expected [N," << channels << ",T,H,W], got "
                                         << shape_str(input.shape()));
  const int64_t N = input.extent(0);
  const int64_t plane = input.extent(2) * input.extent(3) * input.extent(4);
  const int64_t stride_n = channels * plane;
  const auto& k = kernels::table<T>();

  Tensor<T> out(input.shape());
  if (mode == Mode::train) {
    const int64_t m = N * plane;
    ST3D_CHECK(m >= 2,
               "batchnorm3d: train mode needs at least 2 values per channel");
    batch_mean_.assign(channels, T(0));
    batch_inv_std_.assign(channels, T(0));
    for (int64_t c = 0; c < channels; ++c) {
      T s = T(0);
      for (int64_t n = 0; n < N; ++n)
        s += k.sum(input.data() + n * stride_n + c * plane, plane);
      const T mean = s / static_cast<T>(m);
      T sq = T(0);
      for (int64_t n = 0; n < N; ++n)
        sq += k.sq_diff_sum(input.data() + n * stride_n + c * plane, mean,
                            plane);
      const T var = sq / static_cast<T>(m);  // biased
      const T inv_std = T(1) / std::sqrt(var + eps);
      batch_mean_[c] = mean;
      batch_inv_std_[c] = inv_std;
      const T a = gamma[c] * inv_std;
      for (int64_t n = 0; n < N; ++n)
        k.norm_affine(out.data() + n * stride_n + c * plane,
                      input.data() + n * stride_n + c * plane, mean, a,
                      beta[c], plane);
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var;
    }
    cached_input_ = input;
  } else {
    for (int64_t c = 0; c < channels; ++c) {
      const T a = gamma[c] / std::sqrt(running_var[c] + eps);
      for (int64_t n = 0; n < N; ++n)
        k.norm_affine(out.data() + n * stride_n + c * plane,
                      input.data() + n * stride_n + c * plane,
                      running_mean[c], a, beta[c], plane);
    }
  }
  return out;
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_input_.empty(),
             "batchnorm3d: backward without a cached train-mode forward");
  const Tensor<T>& input = cached_input_;
  ST3D_CHECK(grad_out.same_shape(input),
             "batchnorm3d: grad_out shape " << shape_str(grad_out.shape())
                                            << " vs input "
                                            << shape_str(input.shape()));
  const int64_t N = input.extent(0);
  const int64_t plane = input.extent(2) * input.extent(3) * input.extent(4);
  const int64_t stride_n = channels * plane;
  const int64_t m = N * plane;
  const auto& k = kernels::table<T>();

  Tensor<T> grad_input(input.shape());
  for (int64_t c = 0; c < channels; ++c) {
    const T mu = batch_mean_[c];
    const T istd = batch_inv_std_[c];
    T s_dy = T(0), s_dyx = T(0);
    for (int64_t n = 0; n < N; ++n) {
      T a, b;
      k.sum2(grad_out.data() + n * stride_n + c * plane,
             input.data() + n * stride_n + c * plane, mu, plane, &a, &b);
      s_dy += a;
      s_dyx += b;
    }
    grad_gamma[c] = s_dyx * istd;
    grad_beta[c] = s_dy;
    // dx = A*dy + B*(x-mu) + C, the closed form of the coupled batch-norm
    // gradient with biased variance.
    const T A = gamma[c] * istd;
    const T B = -gamma[c] * istd * istd * istd * s_dyx / static_cast<T>(m);
    const T C = -gamma[c] * istd * s_dy / static_cast<T>(m);
    for (int64_t n = 0; n < N; ++n)
      k.bn_bwd_apply(grad_input.data() + n * stride_n + c * plane,
                     grad_out.data() + n * stride_n + c * plane,
                     input.data() + n * stride_n + c * plane, mu, A, B, C,
                     plane);
  }
  return grad_input;
}

// ---------------- MaxPool3d ----------------

template <typename T>
MaxPool3d<T>::MaxPool3d(Dims3 kernel_, Dims3 stride_, Dims3 pad_)
    : kernel(kernel_), stride(stride_), pad(pad_) {
  for (int i = 0; i < 3; ++i) {
    ST3D_CHECK(kernel[i] >= 1, "maxpool3d: window extent < 1 on axis " << i);
    ST3D_CHECK(stride[i] >= 1, "maxpool3d: stride < 1 on axis " << i);
    ST3D_CHECK(pad[i] >= 0 && pad[i] < kernel[i],
               "maxpool3d: pad must satisfy 0 <= pad < kernel on axis " << i);
  }
}

template <typename T>
Shape MaxPool3d<T>::output_shape(const Shape& in_shape) const {
  ST3D_CHECK(in_shape.size() == 5,
             "maxpool3d: expects [N,C,T,H,W], got " << shape_str(in_shape));
  Shape out(in_shape);
  for (int i = 0; i < 3; ++i) {
    out[2 + i] = conv_out_extent(in_shape[2 + i], kernel[i], stride[i], pad[i]);
    ST3D_CHECK(out[2 + i] >= 1, "maxpool3d: non-positive output extent on axis "
                                    << i);
  }
  return out;
}

template <typename T>
Tensor<T> MaxPool3d<T>::forward(const Tensor<T>& input, Mode mode) {
  const Shape out_shape = output_shape(input.shape());
  const int64_t N = input.extent(0), C = input.extent(1);
  const int64_t Ti = input.extent(2), Hi = input.extent(3), Wi = input.extent(4);
  const int64_t To = out_shape[2], Ho = out_shape[3], Wo = out_shape[4];

  Tensor<T> out(out_shape);
  Tensor<int64_t> argmax(out_shape);
  const int64_t plane_in = Ti * Hi * Wi;

  int64_t oi = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* in_p = input.data() + (n * C + c) * plane_in;
      const int64_t base = (n * C + c) * plane_in;
      for (int64_t to = 0; to < To; ++to)
        for (int64_t yo = 0; yo < Ho; ++yo)
          for (int64_t xo = 0; xo < Wo; ++xo, ++oi) {
            T best = -std::numeric_limits<T>::infinity();
            int64_t best_off = -1;
            for (int64_t kt = 0; kt < kernel[0]; ++kt) {
              const int64_t t = to * stride[0] + kt - pad[0];
              if (t < 0 || t >= Ti) continue;
              for (int64_t kh = 0; kh < kernel[1]; ++kh) {
                const int64_t y = yo * stride[1] + kh - pad[1];
                if (y < 0 || y >= Hi) continue;
                for (int64_t kw = 0; kw < kernel[2]; ++kw) {
                  const int64_t x = xo * stride[2] + kw - pad[2];
                  if (x < 0 || x >= Wi) continue;
                  const T v = in_p[(t * Hi + y) * Wi + x];
                  if (v > best) {  // strict: first maximizer wins
                    best = v;
                    best_off = base + (t * Hi + y) * Wi + x;
                  }
                }
              }
            }
            ST3D_CHECK(best_off >= 0, "maxpool3d: window holds no input element");
            out[oi] = best;
            argmax[oi] = best_off;
          }
    }
  if (mode == Mode::train) {
    cached_in_shape_ = input.shape();
    argmax_ = std::move(argmax);
  }
  return out;
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_in_shape_.empty(),
             "maxpool3d: backward without a cached train-mode forward");
  ST3D_CHECK(grad_out.shape() == argmax_.shape(),
             "maxpool3d: grad_out shape " << shape_str(grad_out.shape())
                                          << " vs output "
                                          << shape_str(argmax_.shape()));
  Tensor<T> grad_input(cached_in_shape_);
  for (int64_t i = 0; i < grad_out.numel(); ++i)
    grad_input[argmax_[i]] += grad_out[i];
  return grad_input;
}

// ---------------- GlobalAvgPool ----------------

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& input, Mode mode) {
  ST3D_CHECK(input.rank() == 5,
             "global_avgpool: expects [N,C,T,H,W], got "
                 << shape_str(input.shape()));
  const int64_t N = input.extent(0), C = input.extent(1);
  const int64_t plane = input.extent(2) * input.extent(3) * input.extent(4);
  const auto& k = kernels::table<T>();
  Tensor<T> out({N, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      out[n * C + c] =
          k.sum(input.data() + (n * C + c) * plane, plane) / static_cast<T>(plane);
  if (mode == Mode::train) cached_in_shape_ = input.shape();
  return out;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_in_shape_.empty(),
             "global_avgpool: backward without a cached train-mode forward");
  const int64_t N = cached_in_shape_[0], C = cached_in_shape_[1];
  const int64_t plane =
      cached_in_shape_[2] * cached_in_shape_[3] * cached_in_shape_[4];
  ST3D_CHECK(grad_out.rank() == 2 && grad_out.extent(0) == N &&
                 grad_out.extent(1) == C,
             "global_avgpool: grad_out shape " << shape_str(grad_out.shape()));
  const auto& k = kernels::table<T>();
  Tensor<T> grad_input(cached_in_shape_);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      k.fill(grad_input.data() + (n * C + c) * plane,
             grad_out[n * C + c] / static_cast<T>(plane), plane);
  return grad_input;
}

// ---------------- Relu ----------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& input, Mode mode) {
  const auto& k = kernels::table<T>();
  Tensor<T> out(input.shape());
  k.relu_fwd(out.data(), input.data(), input.numel());
  if (mode == Mode::train) cached_input_ = input;
  return out;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_input_.empty(),
             "relu: backward without a cached train-mode forward");
  ST3D_CHECK(grad_out.same_shape(cached_input_),
             "relu: grad_out shape " << shape_str(grad_out.shape()) << " vs input "
                                     << shape_str(cached_input_.shape()));
  const auto& k = kernels::table<T>();
  Tensor<T> grad_input(grad_out.shape());
  k.relu_bwd(grad_input.data(), cached_input_.data(), grad_out.data(),
             grad_out.numel());
  return grad_input;
}

// ---------------- FullyConnected ----------------

template <typename T>
FullyConnected<T>::FullyConnected(int64_t in_features_, int64_t out_features_)
    : in_features(in_features_), out_features(out_features_) {
  ST3D_CHECK(in_features >= 1 && out_features >= 1,
             "fully_connected: feature counts must be >= 1");
  weight = Tensor<T>({out_features, in_features});
  bias = Tensor<T>({out_features});
  grad_weight = Tensor<T>(weight.shape());
  grad_bias = Tensor<T>(bias.shape());
}

template <typename T>
void FullyConnected<T>::init(Rng& rng) {
  weight = init_weights<T>(weight.shape(), in_features, rng);
  kernels::table<T>().fill(bias.data(), T(0), bias.numel());
}

template <typename T>
Tensor<T> FullyConnected<T>::forward(const Tensor<T>& input, Mode mode) {
  ST3D_CHECK(input.rank() == 2 && input.extent(1) == in_features,
             "fully_connected: expected [N," << in_features << "], got "
                                             << shape_str(input.shape()));
  const int64_t N = input.extent(0);
  Tensor<T> out({N, out_features});
  // y = x * W^T
  kernels::gemm<T>(false, true, N, out_features, in_features, T(1),
                   input.data(), in_features, weight.data(), in_features, T(0),
                   out.data(), out_features);
  for (int64_t n = 0; n < N; ++n)
    kernels::table<T>().add(out.data() + n * out_features,
                            out.data() + n * out_features, bias.data(),
                            out_features);
  if (mode == Mode::train) cached_input_ = input;
  return out;
}

template <typename T>
Tensor<T> FullyConnected<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_input_.empty(),
             "fully_connected: backward without a cached train-mode forward");
  const int64_t N = cached_input_.extent(0);
  ST3D_CHECK(grad_out.rank() == 2 && grad_out.extent(0) == N &&
                 grad_out.extent(1) == out_features,
             "fully_connected: grad_out shape " << shape_str(grad_out.shape()));
  // dW = dy^T * x
  kernels::gemm<T>(true, false, out_features, in_features, N, T(1),
                   grad_out.data(), out_features, cached_input_.data(),
                   in_features, T(0), grad_weight.data(), in_features);
  // db = column sums of dy
  const auto& k = kernels::table<T>();
  k.fill(grad_bias.data(), T(0), grad_bias.numel());
  for (int64_t n = 0; n < N; ++n)
    k.add(grad_bias.data(), grad_bias.data(), grad_out.data() + n * out_features,
          out_features);
  // dx = dy * W
  Tensor<T> grad_input({N, in_features});
  kernels::gemm<T>(false, false, N, in_features, out_features, T(1),
                   grad_out.data(), out_features, weight.data(), in_features,
                   T(0), grad_input.data(), in_features);
  return grad_input;
}

// ---------------- softmax ----------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  ST3D_CHECK(logits.rank() == 2,
             "softmax: expects [N,K], got " << shape_str(logits.shape()));
  const int64_t N = logits.extent(0), K = logits.extent(1);
  Tensor<T> probs(logits.shape());
  for (int64_t n = 0; n < N; ++n) {
    const T* row = logits.data() + n * K;
    T* prow = probs.data() + n * K;
    T mx = row[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int64_t j = 0; j < K; ++j) {
      prow[j] = std::exp(row[j] - mx);
      denom += prow[j];
    }
    const T inv = T(1) / denom;
    for (int64_t j = 0; j < K; ++j) prow[j] *= inv;
  }
  return probs;
}

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                           const std::vector<int64_t>& labels) {
  ST3D_CHECK(logits.rank() == 2,
             "softmax_xent: expects [N,K], got " << shape_str(logits.shape()));
  const int64_t N = logits.extent(0), K = logits.extent(1);
  ST3D_CHECK(static_cast<int64_t>(labels.size()) == N,
             "softmax_xent: " << labels.size() << " labels for batch " << N);
  for (int64_t n = 0; n < N; ++n)
    ST3D_CHECK(labels[n] >= 0 && labels[n] < K,
               "softmax_xent: label " << labels[n] << " out of [0," << K << ")");

  SoftmaxXentResult<T> r;
  r.probs = Tensor<T>(logits.shape());
  r.grad_logits = Tensor<T>(logits.shape());
  T loss = T(0);
  for (int64_t n = 0; n < N; ++n) {
    const T* row = logits.data() + n * K;
    T* prow = r.probs.data() + n * K;
    T mx = row[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int64_t j = 0; j < K; ++j) {
      prow[j] = std::exp(row[j] - mx);
      denom += prow[j];
    }
    loss += std::log(denom) - (row[labels[n]] - mx);
    const T inv = T(1) / denom;
    for (int64_t j = 0; j < K; ++j) prow[j] *= inv;
  }
  r.loss = loss / static_cast<T>(N);
  const T invn = T(1) / static_cast<T>(N);
  for (int64_t n = 0; n < N; ++n) {
    const T* prow = r.probs.data() + n * K;
    T* grow = r.grad_logits.data() + n * K;
    for (int64_t j = 0; j < K; ++j)
      grow[j] = (prow[j] - (j == labels[n] ? T(1) : T(0))) * invn;
  }
  return r;
}

#define ST3D_INSTANTIATE(T)                                       \
  template class Conv3d<T>;                                       \
  template class BatchNorm3d<T>;                                  \
  template class MaxPool3d<T>;                                    \
  template class GlobalAvgPool<T>;                                \
  template class Relu<T>;                                         \
  template class FullyConnected<T>;                               \
  template Tensor<T> softmax<T>(const Tensor<T>&);                \
  template SoftmaxXentResult<T> softmax_cross_entropy<T>(         \
      const Tensor<T>&, const std::vector<int64_t>&);

ST3D_INSTANTIATE(float)
ST3D_INSTANTIATE(double)

#undef ST3D_INSTANTIATE

}  // namespace st3d::nn
