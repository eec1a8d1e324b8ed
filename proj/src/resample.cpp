#include "vseg/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vseg/parallel.hpp"

namespace vseg {

namespace {

struct Tap {
  std::int64_t index;
  double weight;
};

/// Normalised Lanczos taps for every output sample along one axis.
std::vector<std::vector<Tap>> lanczos_taps(std::int64_t n_in, std::int64_t n_out, double step) {
  // step = target / spacing, the input-index distance between output samples.
  const double stretch = std::max(1.0, step);
  const double support = lanczos_order * stretch;
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double u = static_cast<double>(i) * step;
    const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(u - support)));
    const auto hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::ceil(u + support)));
    auto& row = taps[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (std::int64_t j = lo; j <= hi; ++j) {
      const double w = lanczos_kernel((u - static_cast<double>(j)) / stretch);
      if (w != 0.0) {
        row.push_back({j, w});
        sum += w;
      }
    }
    if (row.empty() || sum == 0.0) {
      // Output sample beyond the input support; fall back to the nearest voxel.
      const auto j = std::clamp<std::int64_t>(std::llround(u), 0, n_in - 1);
      row.assign(1, {j, 1.0});
      continue;
    }
    for (auto& t : row) t.weight /= sum;
  }
  return taps;
}

/// One separable pass along `axis`; data is (z,y,x) row-major.
std::vector<double> resample_axis(const std::vector<double>& in, const Extent3& shape, int axis,
                                  std::int64_t n_out, const std::vector<std::vector<Tap>>& taps) {
  Extent3 out_shape = shape;
  out_shape[axis] = n_out;
  std::vector<double> out(static_cast<std::size_t>(voxel_count(out_shape)));
  const std::array<std::int64_t, 3> in_stride{shape[1] * shape[2], shape[2], 1};
  const std::array<std::int64_t, 3> out_stride{out_shape[1] * out_shape[2], out_shape[2], 1};
  // Lines along `axis` are indexed by the two remaining axes.
  int o1 = axis == 0 ? 1 : 0;
  int o2 = axis == 2 ? 1 : 2;
  const std::int64_t lines = shape[o1] * shape[o2];
  parallel_for(lines, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t l = b; l < e; ++l) {
      const std::int64_t c1 = l / shape[o2];
      const std::int64_t c2 = l % shape[o2];
      const std::int64_t in_base = c1 * in_stride[o1] + c2 * in_stride[o2];
      const std::int64_t out_base = c1 * out_stride[o1] + c2 * out_stride[o2];
      for (std::int64_t i = 0; i < n_out; ++i) {
        double acc = 0.0;
        for (const Tap& t : taps[static_cast<std::size_t>(i)]) {
          acc += t.weight * in[static_cast<std::size_t>(in_base + t.index * in_stride[axis])];
        }
        out[static_cast<std::size_t>(out_base + i * out_stride[axis])] = acc;
      }
    }
  }, 16);
  return out;
}

void check_target(double target_spacing_mm) {
  if (!(target_spacing_mm > 0.0) || !std::isfinite(target_spacing_mm)) {
    throw ValidationError("target spacing must be positive");
  }
}

template <typename T>
Volume rescale_impl(const Image3<T>& raw, double slope, double intercept) {
  if (slope == 0.0) throw ValidationError("rescale slope must be non-zero");
  raw.validate();
  Volume out = like<float>(raw);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    out.data[i] = static_cast<float>(slope * static_cast<double>(raw.data[i]) + intercept);
  }
  return out;
}

}  // namespace

Volume hounsfield_rescale(const RawVolume& raw, double slope, double intercept) {
  return rescale_impl(raw, slope, intercept);
}

Volume hounsfield_rescale(const Volume& v, double slope, double intercept) {
  return rescale_impl(v, slope, intercept);
}

double lanczos_kernel(double t) {
  const double a = static_cast<double>(lanczos_order);
  t = std::abs(t);
  if (t >= a) return 0.0;
  if (t < 1e-12) return 1.0;
  const double pt = std::numbers::pi * t;
  return a * std::sin(pt) * std::sin(pt / a) / (pt * pt);
}

std::int64_t resampled_extent(std::int64_t n, double spacing, double target) {
  const double exact = static_cast<double>(n) * spacing / target;
  return std::max<std::int64_t>(1, std::llround(exact));
}

Volume resample_lanczos(const Volume& v, double target_spacing_mm) {
  check_target(target_spacing_mm);
  v.validate();
  const auto [lo_it, hi_it] = std::minmax_element(v.data.begin(), v.data.end());
  const double lo = *lo_it;
  const double hi = *hi_it;

  std::vector<double> buf(v.data.begin(), v.data.end());
  Extent3 shape = v.shape;
  for (int axis = 2; axis >= 0; --axis) {
    const double step = target_spacing_mm / v.spacing_mm[axis];
    const std::int64_t n_out = resampled_extent(v.shape[axis], v.spacing_mm[axis], target_spacing_mm);
    const auto taps = lanczos_taps(v.shape[axis], n_out, step);
    buf = resample_axis(buf, shape, axis, n_out, taps);
    shape[axis] = n_out;
  }

  Volume out(shape, {target_spacing_mm, target_spacing_mm, target_spacing_mm}, v.origin_mm);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out.data[i] = static_cast<float>(std::clamp(buf[i], lo, hi));
  }
  return out;
}

Mask resample_nearest(const Mask& m, double target_spacing_mm) {
  check_target(target_spacing_mm);
  m.validate();
  Extent3 shape{};
  std::array<std::vector<std::int64_t>, 3> src;
  for (int a = 0; a < 3; ++a) {
    shape[a] = resampled_extent(m.shape[a], m.spacing_mm[a], target_spacing_mm);
    const double step = target_spacing_mm / m.spacing_mm[a];
    src[a].resize(static_cast<std::size_t>(shape[a]));
    for (std::int64_t i = 0; i < shape[a]; ++i) {
      src[a][static_cast<std::size_t>(i)] =
          std::clamp<std::int64_t>(std::llround(static_cast<double>(i) * step), 0, m.shape[a] - 1);
    }
  }
  Mask out(shape, {target_spacing_mm, target_spacing_mm, target_spacing_mm}, m.origin_mm);
  for (std::int64_t z = 0; z < shape[0]; ++z) {
    for (std::int64_t y = 0; y < shape[1]; ++y) {
      for (std::int64_t x = 0; x < shape[2]; ++x) {
        out.at(z, y, x) = m.at(src[0][static_cast<std::size_t>(z)], src[1][static_cast<std::size_t>(y)],
                               src[2][static_cast<std::size_t>(x)]);
      }
    }
  }
  return out;
}

}  // namespace vseg
