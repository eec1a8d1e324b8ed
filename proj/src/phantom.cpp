#include "vseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vseg {

namespace {

struct Ellipsoid {
  Vec3 center{};
  Vec3 semi{};

  double level(double z, double y, double x) const {
    const double dz = (z - center[0]) / semi[0];
    const double dy = (y - center[1]) / semi[1];
    const double dx = (x - center[2]) / semi[2];
    return dz * dz + dy * dy + dx * dx;
  }
  bool contains(double z, double y, double x) const { return level(z, y, x) <= 1.0; }
  // Distance from the centre to the surface along unit direction d.
  double reach(const Vec3& d) const {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) s += (d[a] / semi[a]) * (d[a] / semi[a]);
    return 1.0 / std::sqrt(s);
  }
};

double uniform(std::mt19937_64& rng, RealRange r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

void PhantomConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 32) throw ValidationError("phantom shape must be >= 32 per axis");
  }
  if (!(spacing_mm > 0.0)) throw ValidationError("phantom spacing must be positive");
  auto check = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("phantom range '") + what + "' is empty or invalid");
  };
  check(organ_semi_axis.lo > 0.0 && organ_semi_axis.lo <= organ_semi_axis.hi, "organ_semi_axis");
  check(lesion_count.lo >= 0 && lesion_count.lo <= lesion_count.hi, "lesion_count");
  check(lesion_radius.lo > 0.0 && lesion_radius.lo <= lesion_radius.hi, "lesion_radius");
  check(lesion_hu.lo <= lesion_hu.hi, "lesion_hu");
  check(adjacent_semi_axis.lo > 0.0 && adjacent_semi_axis.lo <= adjacent_semi_axis.hi, "adjacent_semi_axis");
  if (!(noise_sigma_hu >= 0.0)) throw ValidationError("noise sigma must be >= 0");
  const double min_extent = static_cast<double>(*std::min_element(shape.begin(), shape.end()));
  if (organ_semi_axis.lo > min_extent / 2.0 - 2.0) {
    throw ValidationError("organ does not fit into the phantom grid");
  }
}

PhantomConfig phantom_config_for(const Extent3& shape) {
  PhantomConfig cfg;
  cfg.shape = shape;
  const double f = static_cast<double>(*std::min_element(shape.begin(), shape.end())) / 64.0;
  for (RealRange* r : {&cfg.organ_semi_axis, &cfg.lesion_radius, &cfg.adjacent_semi_axis}) {
    r->lo *= f;
    r->hi *= f;
  }
  return cfg;
}

std::pair<Volume, Mask> generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Vec3 spacing{cfg.spacing_mm, cfg.spacing_mm, cfg.spacing_mm};

  Ellipsoid organ;
  for (int a = 0; a < 3; ++a) {
    const double fit = static_cast<double>(cfg.shape[a]) / 2.0 - 2.0;
    organ.semi[a] = std::min(uniform(rng, cfg.organ_semi_axis), fit);
    const double lo = organ.semi[a] + 1.0;
    const double hi = static_cast<double>(cfg.shape[a]) - 2.0 - organ.semi[a];
    organ.center[a] = uniform(rng, {lo, std::max(lo, hi)});
  }

  struct Lesion {
    Vec3 center;
    double radius;
    double hu;
  };
  std::vector<Lesion> lesions;
  const int n_lesions = std::uniform_int_distribution<int>(cfg.lesion_count.lo, cfg.lesion_count.hi)(rng);
  for (int k = 0; k < n_lesions; ++k) {
    const double r = uniform(rng, cfg.lesion_radius);
    Ellipsoid inner = organ;
    bool fits = true;
    for (int a = 0; a < 3; ++a) {
      inner.semi[a] -= r;
      fits = fits && inner.semi[a] > 0.0;
    }
    const double hu = uniform(rng, cfg.lesion_hu);
    if (!fits) continue;
    // Rejection sampling inside the shrunk ellipsoid keeps the sphere inside the organ.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vec3 c;
      for (int a = 0; a < 3; ++a) c[a] = uniform(rng, {inner.center[a] - inner.semi[a], inner.center[a] + inner.semi[a]});
      if (inner.contains(c[0], c[1], c[2])) {
        lesions.push_back({c, r, hu});
        break;
      }
    }
  }

  bool has_adjacent = false;
  Ellipsoid adjacent;
  if (cfg.include_adjacent_structure) {
    Vec3 dir;
    double norm = 0.0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    do {
      norm = 0.0;
      for (int a = 0; a < 3; ++a) {
        dir[a] = gauss(rng);
        norm += dir[a] * dir[a];
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (auto& d : dir) d /= norm;
    for (int a = 0; a < 3; ++a) adjacent.semi[a] = uniform(rng, cfg.adjacent_semi_axis);
    const double out = organ.reach(dir);
    const double in = adjacent.reach(dir);
    // Overlap by one voxel so the two bodies touch.
    for (int a = 0; a < 3; ++a) adjacent.center[a] = organ.center[a] + dir[a] * (out + in - 1.0);
    has_adjacent = true;
  }

  Volume vol(cfg.shape, spacing);
  Mask mask(cfg.shape, spacing);
  for (std::int64_t z = 0; z < cfg.shape[0]; ++z) {
    for (std::int64_t y = 0; y < cfg.shape[1]; ++y) {
      for (std::int64_t x = 0; x < cfg.shape[2]; ++x) {
        const double fz = static_cast<double>(z), fy = static_cast<double>(y), fx = static_cast<double>(x);
        double hu = 0.0;
        if (organ.contains(fz, fy, fx)) {
          mask.at(z, y, x) = 1;
          hu = cfg.organ_hu;
          for (const auto& l : lesions) {
            const double dz = fz - l.center[0], dy = fy - l.center[1], dx = fx - l.center[2];
            if (dz * dz + dy * dy + dx * dx <= l.radius * l.radius) hu = l.hu;
          }
        } else if (has_adjacent && adjacent.contains(fz, fy, fx)) {
          hu = cfg.organ_hu;
        }
        vol.at(z, y, x) = static_cast<float>(hu);
      }
    }
  }

  if (cfg.noise_sigma_hu > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma_hu);
    for (auto& v : vol.data) v = static_cast<float>(v + noise(rng));
  }
  return {std::move(vol), std::move(mask)};
}

}  // namespace vseg
