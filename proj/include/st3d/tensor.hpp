#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <numeric>
#include <span>
#include <vector>

#include "st3d/check.hpp"

namespace st3d {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

// Dense N-dimensional array, row-major (last axis fastest). All extents are
// at least 1 and rank is at least 1 once constructed; a default-constructed
// tensor is an empty placeholder.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    ST3D_CHECK(static_cast<int64_t>(data_.size()) == shape_numel(shape_),
               "tensor: buffer length " << data_.size()
                                        << " does not match shape "
                                        << shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  bool empty() const { return data_.empty(); }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  const Shape& shape() const { return shape_; }
  int64_t extent(int64_t axis) const { return shape_[axis]; }

  Shape strides() const {
    Shape s(shape_.size());
    int64_t acc = 1;
    for (int64_t i = rank() - 1; i >= 0; --i) {
      s[i] = acc;
      acc *= shape_[i];
    }
    return s;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return {data_.data(), data_.size()}; }
  std::span<const T> flat() const { return {data_.data(), data_.size()}; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  int64_t offset(std::span<const int64_t> idx) const {
    ST3D_CHECK(static_cast<int64_t>(idx.size()) == rank(),
               "tensor: index rank " << idx.size() << " vs tensor rank "
                                     << rank());
    int64_t off = 0;
    for (int64_t i = 0; i < rank(); ++i) {
      ST3D_CHECK(idx[i] >= 0 && idx[i] < shape_[i],
                 "tensor: index " << idx[i] << " out of range [0,"
                                  << shape_[i] << ") on axis " << i);
      off = off * shape_[i] + idx[i];
    }
    return off;
  }

  T& at(std::initializer_list<int64_t> idx) {
    return data_[static_cast<size_t>(offset({idx.begin(), idx.size()}))];
  }
  const T& at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(offset({idx.begin(), idx.size()}))];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

 private:
  void validate_shape() const {
    ST3D_CHECK(!shape_.empty(), "tensor: rank must be >= 1");
    for (int64_t e : shape_)
      ST3D_CHECK(e >= 1, "tensor: extent " << e << " in shape "
                                           << shape_str(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

// Inverse of Tensor::offset: flat offset back to a multi-index.
inline Shape unravel(int64_t offset, const Shape& shape) {
  Shape idx(shape.size());
  for (int64_t i = static_cast<int64_t>(shape.size()) - 1; i >= 0; --i) {
    idx[i] = offset % shape[i];
    offset /= shape[i];
  }
  return idx;
}

// Binary tensor format: "STT1", rank u32 LE, extents u64 LE each, one dtype
// byte (0 = f32, 1 = f64), then the raw little-endian buffer.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);
template <typename T>
Tensor<T> read_tensor(std::istream& is);

}  // namespace st3d
