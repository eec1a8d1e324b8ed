#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

/// Dimension list: (batch, channels, spatial...), 1 to 3 spatial axes.
using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& s);
std::string shape_string(const Shape& s);

/// (N, C, D, H, W) view of a tensor; missing leading spatial axes are 1.
struct Layout {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::array<std::int64_t, 3> s{1, 1, 1};
  int spatial_dims = 0;

  std::int64_t spatial() const { return s[0] * s[1] * s[2]; }
};

Layout layout_of(const Shape& shape);

/// Dense row-major array of T with shape metadata.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_size(shape_)), fill) {}

  const Shape& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  Layout layout() const { return layout_of(shape_); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Reinterprets the buffer with a new shape of the same element count.
  void reshape(Shape s) {
    if (shape_size(s) != static_cast<std::int64_t>(data_.size())) {
      throw ValidationError("reshape to " + shape_string(s) + " changes element count");
    }
    shape_ = std::move(s);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const BasicTensor& o) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace vseg
