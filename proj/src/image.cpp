#include "st3d/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace st3d::data {

namespace {

// Skips whitespace and '#' comment lines between PPM header tokens.
int next_header_int(std::istream& is, const std::string& path) {
  while (true) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v = -1;
  is >> v;
  ST3D_CHECK(is.good() && v >= 0, "ppm: malformed header in " << path);
  return v;
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ST3D_CHECK(is.good(), "ppm: cannot open " << path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  ST3D_CHECK(m0 == 'P' && m1 == '6', "ppm: " << path << " is not a P6 file");
  ImageU8 img;
  img.width = next_header_int(is, path);
  img.height = next_header_int(is, path);
  const int maxval = next_header_int(is, path);
  ST3D_CHECK(maxval == 255, "ppm: " << path << " has maxval " << maxval
                                    << ", expected 255");
  ST3D_CHECK(img.width >= 1 && img.height >= 1,
             "ppm: " << path << " has empty extent");
  is.get();  // single whitespace after maxval
  img.rgb.resize(static_cast<size_t>(img.width * img.height * 3));
  is.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  ST3D_CHECK(is.gcount() == static_cast<std::streamsize>(img.rgb.size()),
             "ppm: " << path << " is truncated");
  return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  ST3D_CHECK(static_cast<int64_t>(img.rgb.size()) == img.width * img.height * 3,
             "ppm: buffer size does not match " << img.width << "x" << img.height);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ST3D_CHECK(os.good(), "ppm: cannot open " << path << " for writing");
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  ST3D_CHECK(os.good(), "ppm: write to " << path << " failed");
}

Tensor<float> to_planar(const ImageU8& img) {
  Tensor<float> out({3, img.height, img.width});
  const int64_t plane = img.height * img.width;
  for (int64_t i = 0; i < plane; ++i) {
    out[i] = static_cast<float>(img.rgb[3 * i]);
    out[plane + i] = static_cast<float>(img.rgb[3 * i + 1]);
    out[2 * plane + i] = static_cast<float>(img.rgb[3 * i + 2]);
  }
  return out;
}

Tensor<float> bilinear_resize(const Tensor<float>& src, int64_t out_h,
                              int64_t out_w) {
  ST3D_CHECK(src.rank() == 3, "resize: expects [3,H,W], got "
                                  << shape_str(src.shape()));
  ST3D_CHECK(out_h >= 1 && out_w >= 1, "resize: target must be >= 1x1");
  const int64_t C = src.extent(0), H = src.extent(1), W = src.extent(2);
  if (H == out_h && W == out_w) return src;

  Tensor<float> out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    const double wy = fy - y0;
    const int64_t y1 = std::clamp<int64_t>(y0 + 1, 0, H - 1);
    y0 = std::clamp<int64_t>(y0, 0, H - 1);
    for (int64_t x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      const double wx = fx - x0;
      const int64_t x1 = std::clamp<int64_t>(x0 + 1, 0, W - 1);
      x0 = std::clamp<int64_t>(x0, 0, W - 1);
      for (int64_t c = 0; c < C; ++c) {
        const float* p = src.data() + c * H * W;
        const double top = (1.0 - wx) * p[y0 * W + x0] + wx * p[y0 * W + x1];
        const double bot = (1.0 - wx) * p[y1 * W + x0] + wx * p[y1 * W + x1];
        out[(c * out_h + y) * out_w + x] =
            static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Tensor<float> crop_square(const Tensor<float>& frame, int64_t row0,
                          int64_t col0, int64_t side) {
  ST3D_CHECK(frame.rank() == 3, "crop: expects [3,H,W]");
  const int64_t C = frame.extent(0), H = frame.extent(1), W = frame.extent(2);
  ST3D_CHECK(side >= 1 && row0 >= 0 && col0 >= 0 && row0 + side <= H &&
                 col0 + side <= W,
             "crop: window rows [" << row0 << "," << row0 + side << ") cols ["
                                   << col0 << "," << col0 + side
                                   << ") outside frame " << H << "x" << W);
  Tensor<float> out({C, side, side});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < side; ++y) {
      const float* srow = frame.data() + (c * H + row0 + y) * W + col0;
      float* drow = out.data() + (c * side + y) * side;
      std::copy(srow, srow + side, drow);
    }
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& t) {
  ST3D_CHECK(t.rank() >= 1, "flip: empty tensor");
  const int64_t w = t.extent(t.rank() - 1);
  const int64_t rows = t.numel() / w;
  Tensor<T> out(t.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = t.data() + r * w;
    T* dst = out.data() + r * w;
    for (int64_t x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
  }
  return out;
}

template Tensor<float> flip_horizontal<float>(const Tensor<float>&);
template Tensor<double> flip_horizontal<double>(const Tensor<double>&);

}  // namespace st3d::data
