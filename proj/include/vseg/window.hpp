#pragma once

#include <array>
#include <cstdint>

#include "vseg/error.hpp"
#include "vseg/layers.hpp"

namespace vseg {

/// Copies the box [start, start + size) of a (z, y, x) grid into dst (x
/// fastest). Voxels outside the grid are mirrored (reflect) or zero (zero);
/// with Padding::none the box must lie inside.
template <typename T>
void gather_window(const T* src, const std::array<std::int64_t, 3>& shape, const std::array<std::int64_t, 3>& start,
                   const std::array<std::int64_t, 3>& size, Padding mode, T* dst) {
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1) throw ValidationError("window size must be positive");
    if (mode == Padding::none && (start[a] < 0 || start[a] + size[a] > shape[a])) {
      throw ValidationError("window exceeds the volume");
    }
  }
  std::int64_t o = 0;
  for (std::int64_t z = 0; z < size[0]; ++z) {
    const std::int64_t gz = start[0] + z;
    const bool oz = gz < 0 || gz >= shape[0];
    const std::int64_t sz = oz && mode == Padding::reflect ? reflect_index(gz, shape[0]) : gz;
    for (std::int64_t y = 0; y < size[1]; ++y) {
      const std::int64_t gy = start[1] + y;
      const bool oy = gy < 0 || gy >= shape[1];
      const std::int64_t sy = oy && mode == Padding::reflect ? reflect_index(gy, shape[1]) : gy;
      const bool zero_row = mode == Padding::zero && (oz || oy);
      for (std::int64_t x = 0; x < size[2]; ++x, ++o) {
        const std::int64_t gx = start[2] + x;
        const bool ox = gx < 0 || gx >= shape[2];
        if (zero_row || (mode == Padding::zero && ox)) {
          dst[o] = T{0};
          continue;
        }
        const std::int64_t sx = ox ? reflect_index(gx, shape[2]) : gx;
        dst[o] = src[(sz * shape[1] + sy) * shape[2] + sx];
      }
    }
  }
}

}  // namespace vseg
