#include "vseg/postprocess.hpp"

#include <numeric>

namespace vseg {

Mask threshold(const ProbVolume& p, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("threshold must lie in [0, 1]");
  p.validate();
  Mask m = like<std::uint8_t>(p);
  for (std::size_t i = 0; i < p.size(); ++i) m.data[i] = p.data[i] >= t ? 1 : 0;
  return m;
}

namespace {

struct UnionFind {
  std::vector<std::int64_t> parent;

  std::int64_t find(std::int64_t a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      auto& p = parent[static_cast<std::size_t>(a)];
      p = parent[static_cast<std::size_t>(p)];
      a = p;
    }
    return a;
  }
  // The smaller index stays root, so roots are the first voxel in raster order.
  void unite(std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[static_cast<std::size_t>(b)] = a;
  }
};

/// Union-find labels: labels[i] is the root voxel index of voxel i, -1 for
/// background.
std::vector<std::int64_t> label_roots(const Mask& m) {
  m.validate();
  const auto [nz, ny, nx] = m.shape;
  UnionFind uf;
  uf.parent.resize(m.size());
  std::iota(uf.parent.begin(), uf.parent.end(), std::int64_t{0});
  for (std::int64_t z = 0; z < nz; ++z) {
    for (std::int64_t y = 0; y < ny; ++y) {
      for (std::int64_t x = 0; x < nx; ++x) {
        const auto i = static_cast<std::int64_t>(m.index(z, y, x));
        if (!m.data[static_cast<std::size_t>(i)]) continue;
        // The 13 neighbours that precede (z, y, x) in raster order.
        for (std::int64_t dz = -1; dz <= 0; ++dz) {
          for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
              if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
              const std::int64_t qz = z + dz, qy = y + dy, qx = x + dx;
              if (qz < 0 || qy < 0 || qy >= ny || qx < 0 || qx >= nx) continue;
              const auto j = static_cast<std::int64_t>(m.index(qz, qy, qx));
              if (m.data[static_cast<std::size_t>(j)]) uf.unite(i, j);
            }
          }
        }
      }
    }
  }
  std::vector<std::int64_t> roots(m.size(), -1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.data[i]) roots[i] = uf.find(static_cast<std::int64_t>(i));
  }
  return roots;
}

}  // namespace

std::vector<std::int64_t> component_sizes(const Mask& m) {
  const auto roots = label_roots(m);
  std::vector<std::int64_t> count(m.size(), 0);
  for (auto r : roots) {
    if (r >= 0) ++count[static_cast<std::size_t>(r)];
  }
  std::vector<std::int64_t> sizes;
  for (auto c : count) {
    if (c > 0) sizes.push_back(c);
  }
  return sizes;
}

Mask largest_component(const Mask& m) {
  const auto roots = label_roots(m);
  std::vector<std::int64_t> count(m.size(), 0);
  for (auto r : roots) {
    if (r >= 0) ++count[static_cast<std::size_t>(r)];
  }
  std::int64_t best = -1, best_size = 0;
  for (std::size_t i = 0; i < count.size(); ++i) {
    if (count[i] > best_size) {
      best_size = count[i];
      best = static_cast<std::int64_t>(i);
    }
  }
  Mask out = like<std::uint8_t>(m);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = (best >= 0 && roots[i] == best) ? 1 : 0;
  return out;
}

}  // namespace vseg
