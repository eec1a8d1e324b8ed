#include "vseg/inference.hpp"

#include <algorithm>

#include "vseg/window.hpp"

namespace vseg {

SliceAxis parse_axis(const std::string& s) {
  if (s == "transversal") return SliceAxis::transversal;
  if (s == "coronal") return SliceAxis::coronal;
  if (s == "sagittal") return SliceAxis::sagittal;
  throw ValidationError("unknown axis '" + s + "' (expected transversal, coronal or sagittal)");
}

std::string to_string(SliceAxis a) {
  switch (a) {
    case SliceAxis::transversal: return "transversal";
    case SliceAxis::coronal: return "coronal";
    case SliceAxis::sagittal: return "sagittal";
  }
  return "?";
}

int axis_index(SliceAxis a) { return a == SliceAxis::transversal ? 0 : a == SliceAxis::coronal ? 1 : 2; }

std::int64_t TileGeometry::fit_output(std::int64_t n) const {
  if (n <= min_output) return min_output;
  return min_output + (n - min_output + period - 1) / period * period;
}

TileGeometry tile_geometry(const ArchSpec& spec, Padding conv_padding) {
  ArchSpec s = spec;
  s.conv_padding = conv_padding;
  TileGeometry g;
  g.period = s.period();
  if (conv_padding == Padding::none) {
    const std::int64_t m = min_valid_input(s);
    g.shrink = m - output_size(m, s);
    g.min_output = m - g.shrink;
  } else {
    g.shrink = 0;
    g.min_output = g.period;
  }
  return g;
}

std::vector<Tile> tile_plan(const SpatialSize& shape, const TileGeometry& geom, std::int64_t max_output_tile) {
  if (shape.empty()) throw ValidationError("tile_plan: empty shape");
  for (auto n : shape) {
    if (n < 1) throw ValidationError("tile_plan: degenerate volume shape");
  }
  if (!geom.valid_output(max_output_tile)) {
    throw ValidationError("tile_plan: max output tile " + std::to_string(max_output_tile) +
                          " is not a valid output size");
  }
  const std::int64_t chunk = max_output_tile / geom.period * geom.period;
  if (chunk < 1) throw ValidationError("tile_plan: max output tile smaller than the pooling period");
  const std::size_t dims = shape.size();
  std::vector<std::vector<std::int64_t>> starts(dims);
  for (std::size_t a = 0; a < dims; ++a) {
    for (std::int64_t s = 0; s < shape[a]; s += chunk) starts[a].push_back(s);
  }
  std::vector<Tile> tiles;
  std::vector<std::size_t> idx(dims, 0);
  while (true) {
    Tile t;
    for (std::size_t a = 0; a < dims; ++a) {
      const std::int64_t s = starts[a][idx[a]];
      const std::int64_t len = std::min(chunk, shape[a] - s);
      const std::int64_t wo = geom.fit_output(len);
      t.out_start.push_back(s);
      t.out_size.push_back(len);
      t.window_output.push_back(wo);
      t.in_start.push_back(s - geom.shrink / 2);
      t.in_size.push_back(wo + geom.shrink);
    }
    tiles.push_back(std::move(t));
    std::size_t a = dims;
    while (a > 0) {
      --a;
      if (++idx[a] < starts[a].size()) break;
      idx[a] = 0;
      if (a == 0) return tiles;
    }
  }
}

std::vector<Tile> tile_plan(const SpatialSize& shape, const ArchSpec& spec, std::int64_t max_output_tile) {
  return tile_plan(shape, tile_geometry(spec), max_output_tile);
}

Tensor predict_tiled(const Network& net, const TileGeometry& geom, const Tensor& image, std::int64_t max_output_tile,
                     const ForwardOptions& opt) {
  const Layout L = image.layout();
  if (L.n != 1) throw ValidationError("predict_tiled expects a single image");
  const int dims = L.spatial_dims;
  const int off = 3 - dims;
  SpatialSize shape(L.s.begin() + off, L.s.end());
  const auto tiles = tile_plan(shape, geom, max_output_tile);
  Tensor out;
  const std::int64_t plane = L.spatial();
  for (const Tile& t : tiles) {
    std::array<std::int64_t, 3> start{0, 0, 0}, size{1, 1, 1};
    for (int a = 0; a < dims; ++a) {
      start[static_cast<std::size_t>(off + a)] = t.in_start[static_cast<std::size_t>(a)];
      size[static_cast<std::size_t>(off + a)] = t.in_size[static_cast<std::size_t>(a)];
    }
    Shape wshape{1, L.c};
    wshape.insert(wshape.end(), t.in_size.begin(), t.in_size.end());
    Tensor window(wshape);
    const std::int64_t wplane = size[0] * size[1] * size[2];
    for (std::int64_t c = 0; c < L.c; ++c) {
      gather_window(image.data() + c * plane, L.s, start, size, Padding::reflect, window.data() + c * wplane);
    }
    const Tensor y = net.predict(window, opt);
    const Layout ly = y.layout();
    for (int a = 0; a < dims; ++a) {
      if (ly.s[static_cast<std::size_t>(off + a)] != t.window_output[static_cast<std::size_t>(a)]) {
        throw ValidationError("network output extent does not match the tile geometry");
      }
    }
    if (out.empty()) {
      Shape os{1, ly.c};
      os.insert(os.end(), shape.begin(), shape.end());
      out = Tensor(os);
    }
    std::array<std::int64_t, 3> os0{0, 0, 0}, osz{1, 1, 1};
    for (int a = 0; a < dims; ++a) {
      os0[static_cast<std::size_t>(off + a)] = t.out_start[static_cast<std::size_t>(a)];
      osz[static_cast<std::size_t>(off + a)] = t.out_size[static_cast<std::size_t>(a)];
    }
    const std::int64_t yplane = ly.spatial();
    for (std::int64_t c = 0; c < ly.c; ++c) {
      for (std::int64_t z = 0; z < osz[0]; ++z) {
        for (std::int64_t yy = 0; yy < osz[1]; ++yy) {
          const float* src = y.data() + c * yplane + (z * ly.s[1] + yy) * ly.s[2];
          float* dst = out.data() + c * plane + ((os0[0] + z) * L.s[1] + os0[1] + yy) * L.s[2] + os0[2];
          std::copy_n(src, osz[2], dst);
        }
      }
    }
  }
  return out;
}

namespace {

void require_arch(const Network& net, const ArchSpec& spec) {
  if (net.spatial_dims() != spec.dims) throw ValidationError("network dimensionality does not match the spec");
}

}  // namespace

ProbVolume segment_slicewise(const Network& net, const ArchSpec& spec, const Volume& v, SliceAxis axis,
                             std::int64_t max_output_tile) {
  require_arch(net, spec);
  if (spec.dims != 2) throw ValidationError("segment_slicewise needs a 2D network");
  v.validate();
  const int ax = axis_index(axis);
  std::array<std::int64_t, 3> size = v.shape;
  size[static_cast<std::size_t>(ax)] = 1;
  std::array<std::int64_t, 2> plane_dims{};
  for (int a = 0, k = 0; a < 3; ++a) {
    if (a != ax) plane_dims[static_cast<std::size_t>(k++)] = v.shape[static_cast<std::size_t>(a)];
  }
  const TileGeometry geom = tile_geometry(spec);
  ProbVolume out = like<float>(v);
  for (std::int64_t k = 0; k < v.shape[static_cast<std::size_t>(ax)]; ++k) {
    std::array<std::int64_t, 3> start{0, 0, 0};
    start[static_cast<std::size_t>(ax)] = k;
    Tensor slice(Shape{1, 1, plane_dims[0], plane_dims[1]});
    gather_window(v.data.data(), v.shape, start, size, Padding::none, slice.data());
    const Tensor p = predict_tiled(net, geom, slice, max_output_tile);
    const float* fg = p.data() + plane_dims[0] * plane_dims[1];
    std::int64_t i = 0;
    for (std::int64_t z = start[0]; z < start[0] + size[0]; ++z) {
      for (std::int64_t y = start[1]; y < start[1] + size[1]; ++y) {
        for (std::int64_t x = start[2]; x < start[2] + size[2]; ++x) out.at(z, y, x) = fg[i++];
      }
    }
  }
  return out;
}

ProbVolume segment_3d(const Network& net, const ArchSpec& spec, const Volume& v, std::int64_t max_output_tile) {
  require_arch(net, spec);
  if (spec.dims != 3) throw ValidationError("segment_3d needs a 3D network");
  v.validate();
  ForwardOptions opt;
  if (spec.conv_padding != Padding::none) opt.conv_padding = Padding::none;
  const TileGeometry geom = tile_geometry(spec, Padding::none);
  Tensor image(Shape{1, 1, v.shape[0], v.shape[1], v.shape[2]});
  std::copy(v.data.begin(), v.data.end(), image.data());
  return probability_volume(predict_tiled(net, geom, image, max_output_tile, opt), v);
}

ProbVolume segment(const Network& net, const ArchSpec& spec, const Volume& v, SliceAxis axis,
                   std::int64_t max_output_tile) {
  if (spec.dims == 2) {
    return segment_slicewise(net, spec, v, axis, max_output_tile > 0 ? max_output_tile : default_tile_2d);
  }
  return segment_3d(net, spec, v, max_output_tile > 0 ? max_output_tile : default_tile_3d);
}

ProbVolume probability_volume(const Tensor& probs, const Volume& geometry) {
  const Layout l = probs.layout();
  if (l.n != 1 || l.c != 2 || l.s != geometry.shape) {
    throw ValidationError("probability tensor " + shape_string(probs.shape()) + " does not match the volume");
  }
  ProbVolume out = like<float>(geometry);
  std::copy_n(probs.data() + l.spatial(), l.spatial(), out.data.data());
  return out;
}

Mask fuse_mean(const ProbVolume& t, const ProbVolume& c, const ProbVolume& s) {
  require_same_geometry(t, c, "fuse_mean");
  require_same_geometry(t, s, "fuse_mean");
  Mask m = like<std::uint8_t>(t);
  for (std::size_t i = 0; i < m.size(); ++i) {
    // Sum in a fixed order of sorted operands so the rule is symmetric.
    float a[3] = {t.data[i], c.data[i], s.data[i]};
    std::sort(a, a + 3);
    const double mean = (static_cast<double>(a[0]) + a[1] + a[2]) / 3.0;
    m.data[i] = mean >= 0.5 ? 1 : 0;
  }
  return m;
}

}  // namespace vseg
