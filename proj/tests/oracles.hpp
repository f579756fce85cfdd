// Test-side oracles, independent of the library's implementation paths:
// a direct 7-loop convolution (the engine lowers via im2col + gemm) and a
// closed-form per-layer parameter count.
#pragma once

#include <array>
#include <cstdint>

#include "st3d/rng.hpp"
#include "st3d/tensor.hpp"

namespace oracle {

using st3d::Rng;
using st3d::Shape;
using st3d::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                        double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return t;
}

// out[n,o,t,y,x] = sum_{c,i,j,k} w[o,c,i,j,k] * in_pad[n,c,t*sT+i,y*sH+j,x*sW+k]
template <typename T>
Tensor<T> conv3d_direct(const Tensor<T>& in, const Tensor<T>& w,
                        const std::array<int64_t, 3>& stride,
                        const std::array<int64_t, 3>& pad) {
  const int64_t N = in.extent(0), C = in.extent(1), Ti = in.extent(2),
                Hi = in.extent(3), Wi = in.extent(4);
  const int64_t O = w.extent(0), kT = w.extent(2), kH = w.extent(3),
                kW = w.extent(4);
  const int64_t To = (Ti + 2 * pad[0] - kT) / stride[0] + 1;
  const int64_t Ho = (Hi + 2 * pad[1] - kH) / stride[1] + 1;
  const int64_t Wo = (Wi + 2 * pad[2] - kW) / stride[2] + 1;

  Tensor<T> out({N, O, To, Ho, Wo});
  int64_t oi = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t to = 0; to < To; ++to)
        for (int64_t yo = 0; yo < Ho; ++yo)
          for (int64_t xo = 0; xo < Wo; ++xo, ++oi) {
            T acc = T(0);
            for (int64_t c = 0; c < C; ++c)
              for (int64_t i = 0; i < kT; ++i)
                for (int64_t j = 0; j < kH; ++j)
                  for (int64_t k = 0; k < kW; ++k) {
                    const int64_t t = to * stride[0] + i - pad[0];
                    const int64_t y = yo * stride[1] + j - pad[1];
                    const int64_t x = xo * stride[2] + k - pad[2];
                    if (t < 0 || t >= Ti || y < 0 || y >= Hi || x < 0 ||
                        x >= Wi)
                      continue;
                    acc += w.at({o, c, i, j, k}) *
                           in.at({n, c, t, y, x});
                  }
            out[oi] = acc;
          }
  return out;
}

// Closed-form trainable-parameter total, summed layer by layer from the
// architecture description: conv1 (k^3 * in * out), BN pairs, two 3x3x3
// convs plus two BNs per block, and the final affine classifier.
inline int64_t count_params(const std::array<int, 4>& block_counts,
                            const std::array<int64_t, 4>& channels,
                            int64_t in_channels, int64_t num_classes) {
  int64_t total = 0;
  total += channels[0] * in_channels * 7 * 7 * 7;  // conv1
  total += 2 * channels[0];                        // bn1
  int64_t prev = channels[0];
  for (int s = 0; s < 4; ++s) {
    const int64_t c = channels[s];
    for (int b = 0; b < block_counts[s]; ++b) {
      const int64_t in_ch = (b == 0) ? prev : c;
      total += c * in_ch * 27;  // conv_a
      total += 2 * c;           // bn_a
      total += c * c * 27;      // conv_b
      total += 2 * c;           // bn_b
    }
    prev = c;
  }
  total += num_classes * prev + num_classes;  // fc
  return total;
}

}  // namespace oracle
