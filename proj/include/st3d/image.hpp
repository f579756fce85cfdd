#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "st3d/tensor.hpp"

namespace st3d::data {

// 8-bit interleaved RGB.
struct ImageU8 {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> rgb;
};

// Binary PPM (P6, maxval 255).
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// Channel-planar [3, H, W] float frame in pixel units (0..255).
Tensor<float> to_planar(const ImageU8& img);

// Bilinear with half-pixel centers (src = (dst + 0.5) * in/out - 0.5,
// clamped); identity when extents match.
Tensor<float> bilinear_resize(const Tensor<float>& src, int64_t out_h,
                              int64_t out_w);

// Square window copy: rows [row0, row0+side), cols [col0, col0+side).
Tensor<float> crop_square(const Tensor<float>& frame, int64_t row0,
                          int64_t col0, int64_t side);

// Reverses the last (width) axis of a [3, H, W] frame or [3, T, H, W] clip.
template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& t);

}  // namespace st3d::data
