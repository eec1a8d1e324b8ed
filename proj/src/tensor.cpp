#include "vseg/tensor.hpp"

#include <sstream>

namespace vseg {

std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= d;
  }
  return s.empty() ? 0 : n;
}

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Layout layout_of(const Shape& shape) {
  if (shape.size() < 3 || shape.size() > 5) {
    throw ValidationError("expected (N, C, spatial...) tensor with 1-3 spatial axes, got " + shape_string(shape));
  }
  Layout l;
  l.n = shape[0];
  l.c = shape[1];
  l.spatial_dims = static_cast<int>(shape.size()) - 2;
  const int off = 3 - l.spatial_dims;
  for (int i = 0; i < l.spatial_dims; ++i) l.s[static_cast<std::size_t>(off + i)] = shape[static_cast<std::size_t>(2 + i)];
  return l;
}

}  // namespace vseg
