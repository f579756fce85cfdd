#include "st3d/tensor_ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <type_traits>

#include "st3d/kernels.hpp"

namespace st3d {

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* what) {
  ST3D_CHECK(a.same_shape(b), what << ": shape mismatch " << shape_str(a.shape())
                                   << " vs " << shape_str(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const auto& k = kernels::table<T>();
  Tensor<T> out(a.shape());
  switch (op) {
    case EwOp::add:
      check_same_shape(a, b, "add");
      k.add(out.data(), a.data(), b.data(), a.numel());
      break;
    case EwOp::sub:
      check_same_shape(a, b, "sub");
      k.sub(out.data(), a.data(), b.data(), a.numel());
      break;
    case EwOp::mul:
      check_same_shape(a, b, "mul");
      k.mul(out.data(), a.data(), b.data(), a.numel());
      break;
    default:
      ST3D_CHECK(false, "elementwise: op requires the tensor-scalar form");
  }
  return out;
}

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, T scalar) {
  const auto& k = kernels::table<T>();
  Tensor<T> out(a.shape());
  switch (op) {
    case EwOp::scale:
      k.scale(out.data(), a.data(), scalar, a.numel());
      break;
    case EwOp::relu:
      k.relu_fwd(out.data(), a.data(), a.numel());
      break;
    default:
      ST3D_CHECK(false, "elementwise: op requires the tensor-tensor form");
  }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  ST3D_CHECK(a.rank() == 2 && b.rank() == 2,
             "matmul: expects rank-2 inputs, got " << shape_str(a.shape())
                                                   << " and "
                                                   << shape_str(b.shape()));
  const int64_t m = a.extent(0), k = a.extent(1);
  const int64_t k2 = b.extent(0), n = b.extent(1);
  ST3D_CHECK(k == k2, "matmul: inner extents disagree, "
                          << shape_str(a.shape()) << " vs "
                          << shape_str(b.shape()));
  Tensor<T> c({m, n});
  kernels::gemm<T>(false, false, m, n, k, T(1), a.data(), k, b.data(), n,
                   T(0), c.data(), n);
  return c;
}

namespace {

template <typename T>
struct ReducePlan {
  Shape out_shape;
  std::vector<int64_t> out_stride_per_axis;  // 0 for reduced axes
  std::vector<int64_t> red_stride_per_axis;  // 0 for kept axes
  int64_t reduced_count = 1;
};

template <typename T>
ReducePlan<T> plan_reduce(const Tensor<T>& t, const std::vector<int64_t>& axes) {
  ST3D_CHECK(!axes.empty(), "reduce: empty axis list");
  std::set<int64_t> seen;
  for (int64_t ax : axes) {
    ST3D_CHECK(ax >= 0 && ax < t.rank(),
               "reduce: axis " << ax << " out of range for rank " << t.rank());
    ST3D_CHECK(seen.insert(ax).second, "reduce: duplicate axis " << ax);
  }
  ReducePlan<T> plan;
  std::vector<bool> is_red(t.rank(), false);
  for (int64_t ax : axes) is_red[ax] = true;

  Shape red_shape;
  for (int64_t i = 0; i < t.rank(); ++i) {
    if (is_red[i]) {
      red_shape.push_back(t.extent(i));
      plan.reduced_count *= t.extent(i);
    } else {
      plan.out_shape.push_back(t.extent(i));
    }
  }
  if (plan.out_shape.empty()) plan.out_shape = {1};

  // Strides of each input axis within the output / reduced index spaces.
  plan.out_stride_per_axis.assign(t.rank(), 0);
  plan.red_stride_per_axis.assign(t.rank(), 0);
  int64_t oacc = 1, racc = 1;
  for (int64_t i = t.rank() - 1; i >= 0; --i) {
    if (is_red[i]) {
      plan.red_stride_per_axis[i] = racc;
      racc *= t.extent(i);
    } else {
      plan.out_stride_per_axis[i] = oacc;
      oacc *= t.extent(i);
    }
  }
  return plan;
}

// Walks the input in row-major order, handing (flat, out_offset, red_offset)
// to the visitor. Row-major input order makes "first maximizer" well defined.
template <typename T, typename Fn>
void walk_reduce(const Tensor<T>& t, const ReducePlan<T>& plan, Fn&& fn) {
  const int64_t rank = t.rank();
  Shape idx(rank, 0);
  const int64_t total = t.numel();
  int64_t out_off = 0, red_off = 0;
  for (int64_t flat = 0; flat < total; ++flat) {
    fn(flat, out_off, red_off);
    for (int64_t ax = rank - 1; ax >= 0; --ax) {
      idx[ax]++;
      out_off += plan.out_stride_per_axis[ax];
      red_off += plan.red_stride_per_axis[ax];
      if (idx[ax] < t.extent(ax)) break;
      idx[ax] = 0;
      out_off -= plan.out_stride_per_axis[ax] * t.extent(ax);
      red_off -= plan.red_stride_per_axis[ax] * t.extent(ax);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> reduce(const Tensor<T>& t, const std::vector<int64_t>& axes,
                 ReduceKind kind) {
  const auto plan = plan_reduce(t, axes);
  Tensor<T> out(plan.out_shape);
  walk_reduce(t, plan, [&](int64_t flat, int64_t out_off, int64_t) {
    out[out_off] += t[flat];
  });
  if (kind == ReduceKind::mean) {
    const T inv = T(1) / static_cast<T>(plan.reduced_count);
    for (auto& v : out) v *= inv;
  }
  return out;
}

template <typename T>
MaxReduceResult<T> reduce_max(const Tensor<T>& t,
                              const std::vector<int64_t>& axes) {
  const auto plan = plan_reduce(t, axes);
  MaxReduceResult<T> r{Tensor<T>(plan.out_shape),
                       Tensor<int64_t>(plan.out_shape)};
  std::vector<bool> seen(static_cast<size_t>(shape_numel(plan.out_shape)),
                         false);
  walk_reduce(t, plan, [&](int64_t flat, int64_t out_off, int64_t red_off) {
    if (!seen[out_off] || t[flat] > r.values[out_off]) {
      seen[out_off] = true;
      r.values[out_off] = t[flat];
      r.indices[out_off] = red_off;
    }
  });
  return r;
}

template <typename T>
Tensor<T> pad_and_slice(const Tensor<T>& t,
                        const std::vector<std::pair<int64_t, int64_t>>& pads,
                        const std::vector<int64_t>& steps) {
  const int64_t rank = t.rank();
  ST3D_CHECK(static_cast<int64_t>(pads.size()) == rank &&
                 static_cast<int64_t>(steps.size()) == rank,
             "pad_and_slice: pads/steps rank mismatch");
  Shape out_shape(rank);
  for (int64_t i = 0; i < rank; ++i) {
    ST3D_CHECK(pads[i].first >= 0 && pads[i].second >= 0,
               "pad_and_slice: negative pad on axis " << i);
    ST3D_CHECK(steps[i] >= 1, "pad_and_slice: step " << steps[i] << " on axis " << i);
    out_shape[i] =
        (t.extent(i) + pads[i].first + pads[i].second - 1) / steps[i] + 1;
  }
  Tensor<T> out(out_shape);
  const int64_t total = out.numel();
  Shape idx(rank, 0);
  Shape in_strides = t.strides();
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t src = 0;
    bool inside = true;
    for (int64_t i = 0; i < rank; ++i) {
      const int64_t p = idx[i] * steps[i] - pads[i].first;
      if (p < 0 || p >= t.extent(i)) {
        inside = false;
        break;
      }
      src += p * in_strides[i];
    }
    if (inside) out[flat] = t[src];
    for (int64_t ax = rank - 1; ax >= 0; --ax) {
      if (++idx[ax] < out_shape[ax]) break;
      idx[ax] = 0;
    }
  }
  return out;
}

template <typename T>
Tensor<T> pad_and_slice_backward(
    const Tensor<T>& grad_out, const Shape& in_shape,
    const std::vector<std::pair<int64_t, int64_t>>& pads,
    const std::vector<int64_t>& steps) {
  const int64_t rank = static_cast<int64_t>(in_shape.size());
  ST3D_CHECK(grad_out.rank() == rank, "pad_and_slice_backward: rank mismatch");
  Tensor<T> grad_in(in_shape);
  Shape in_strides = grad_in.strides();
  Shape idx(rank, 0);
  const int64_t total = grad_out.numel();
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t src = 0;
    bool inside = true;
    for (int64_t i = 0; i < rank; ++i) {
      const int64_t p = idx[i] * steps[i] - pads[i].first;
      if (p < 0 || p >= in_shape[i]) {
        inside = false;
        break;
      }
      src += p * in_strides[i];
    }
    if (inside) grad_in[src] += grad_out[flat];
    for (int64_t ax = rank - 1; ax >= 0; --ax) {
      if (++idx[ax] < grad_out.extent(ax)) break;
      idx[ax] = 0;
    }
  }
  return grad_in;
}

template <typename T>
Tensor<T> init_weights(Shape shape, int64_t fan_in, Rng& rng) {
  ST3D_CHECK(fan_in >= 1, "init_weights: fan_in " << fan_in << " must be >= 1");
  Tensor<T> t(std::move(shape));
  const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t) v = static_cast<T>(sigma * rng.normal());
  return t;
}

// --- serialization ---

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  ST3D_CHECK(is.good(), "tensor read: truncated stream");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  ST3D_CHECK(is.good(), "tensor read: truncated stream");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

template <typename T>
constexpr unsigned char dtype_code() {
  if constexpr (std::is_same_v<T, float>)
    return 0;
  else
    return 1;
}

constexpr bool host_is_little_endian() {
  return std::endian::native == std::endian::little;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  os.write("STT1", 4);
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int64_t i = 0; i < t.rank(); ++i)
    put_u64(os, static_cast<uint64_t>(t.extent(i)));
  const unsigned char code = dtype_code<T>();
  os.write(reinterpret_cast<const char*>(&code), 1);
  if constexpr (host_is_little_endian()) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(T)));
  } else {
    for (int64_t i = 0; i < t.numel(); ++i) {
      T v = t[i];
      unsigned char b[sizeof(T)];
      std::memcpy(b, &v, sizeof(T));
      std::reverse(b, b + sizeof(T));
      os.write(reinterpret_cast<const char*>(b), sizeof(T));
    }
  }
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  char magic[4];
  is.read(magic, 4);
  ST3D_CHECK(is.good() && std::memcmp(magic, "STT1", 4) == 0,
             "tensor read: bad magic");
  const uint32_t rank = get_u32(is);
  ST3D_CHECK(rank >= 1 && rank <= 64, "tensor read: implausible rank " << rank);
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i)
    shape[i] = static_cast<int64_t>(get_u64(is));
  unsigned char code;
  is.read(reinterpret_cast<char*>(&code), 1);
  ST3D_CHECK(is.good(), "tensor read: truncated stream");
  ST3D_CHECK(code == dtype_code<T>(),
             "tensor read: dtype code " << int(code) << " does not match "
                                        << (dtype_code<T>() == 0 ? "f32" : "f64"));
  Tensor<T> t(shape);
  if constexpr (host_is_little_endian()) {
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
    ST3D_CHECK(is.good(), "tensor read: truncated buffer");
  } else {
    for (int64_t i = 0; i < t.numel(); ++i) {
      unsigned char b[sizeof(T)];
      is.read(reinterpret_cast<char*>(b), sizeof(T));
      ST3D_CHECK(is.good(), "tensor read: truncated buffer");
      std::reverse(b, b + sizeof(T));
      std::memcpy(&t[i], b, sizeof(T));
    }
  }
  return t;
}

#define ST3D_INSTANTIATE(T)                                                  \
  template Tensor<T> elementwise<T>(EwOp, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> elementwise<T>(EwOp, const Tensor<T>&, T);             \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> reduce<T>(const Tensor<T>&, const std::vector<int64_t>&, \
                               ReduceKind);                                  \
  template MaxReduceResult<T> reduce_max<T>(const Tensor<T>&,               \
                                            const std::vector<int64_t>&);   \
  template Tensor<T> pad_and_slice<T>(                                      \
      const Tensor<T>&, const std::vector<std::pair<int64_t, int64_t>>&,    \
      const std::vector<int64_t>&);                                         \
  template Tensor<T> pad_and_slice_backward<T>(                             \
      const Tensor<T>&, const Shape&,                                       \
      const std::vector<std::pair<int64_t, int64_t>>&,                      \
      const std::vector<int64_t>&);                                         \
  template Tensor<T> init_weights<T>(Shape, int64_t, Rng&);                 \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);           \
  template Tensor<T> read_tensor<T>(std::istream&);

ST3D_INSTANTIATE(float)
ST3D_INSTANTIATE(double)

#undef ST3D_INSTANTIATE

}  // namespace st3d
