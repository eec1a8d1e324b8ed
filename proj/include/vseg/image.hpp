#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

/// Voxel counts in (z, y, x) order.
using Extent3 = std::array<std::int64_t, 3>;
/// Physical quantities in (z, y, x) order, millimetres.
using Vec3 = std::array<double, 3>;

inline std::int64_t voxel_count(const Extent3& e) { return e[0] * e[1] * e[2]; }

/// Dense 3-D scalar grid with physical geometry. Row-major, x fastest.
template <typename T>
struct Image3 {
  Extent3 shape{1, 1, 1};
  Vec3 spacing_mm{1.0, 1.0, 1.0};
  Vec3 origin_mm{0.0, 0.0, 0.0};
  std::vector<T> data;

  Image3() : data(1) {}
  explicit Image3(const Extent3& s, const Vec3& spacing = {1.0, 1.0, 1.0},
                  const Vec3& origin = {0.0, 0.0, 0.0}, T fill = T{})
      : shape(s), spacing_mm(spacing), origin_mm(origin) {
    validate_geometry();
    data.assign(static_cast<std::size_t>(voxel_count(shape)), fill);
  }

  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>((z * shape[1] + y) * shape[2] + x);
  }
  T& at(std::int64_t z, std::int64_t y, std::int64_t x) { return data[index(z, y, x)]; }
  const T& at(std::int64_t z, std::int64_t y, std::int64_t x) const { return data[index(z, y, x)]; }

  std::size_t size() const { return data.size(); }

  void validate_geometry() const {
    for (int a = 0; a < 3; ++a) {
      if (shape[a] < 1) throw ValidationError("image shape components must be >= 1");
      if (!(spacing_mm[a] > 0.0)) throw ValidationError("image spacing components must be > 0");
    }
  }

  /// Checks invariants, including data length.
  void validate() const {
    validate_geometry();
    if (data.size() != static_cast<std::size_t>(voxel_count(shape))) {
      throw ValidationError("image data length does not match its shape");
    }
  }
};

/// Raw CT intensities as stored by scanners.
using RawVolume = Image3<std::int16_t>;
/// Rescaled or resampled intensities.
using Volume = Image3<float>;
/// Binary segmentation, one byte per voxel holding 0 or 1.
using Mask = Image3<std::uint8_t>;
/// Per-voxel foreground probability in [0, 1].
using ProbVolume = Image3<float>;

template <typename A, typename B>
bool same_geometry(const Image3<A>& a, const Image3<B>& b) {
  return a.shape == b.shape && a.spacing_mm == b.spacing_mm && a.origin_mm == b.origin_mm;
}

template <typename A, typename B>
void require_same_geometry(const Image3<A>& a, const Image3<B>& b, const char* what) {
  if (!same_geometry(a, b)) throw ValidationError(std::string(what) + ": geometry mismatch");
}

/// Copies geometry of `like` into a new zero-filled image of type T.
template <typename T, typename U>
Image3<T> like(const Image3<U>& ref, T fill = T{}) {
  return Image3<T>(ref.shape, ref.spacing_mm, ref.origin_mm, fill);
}

}  // namespace vseg
