#pragma once

#include <cstdint>
#include <utility>

#include "vseg/image.hpp"

namespace vseg {

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

/// Synthetic liver-like CT phantom parameters. Lengths are in voxels.
struct PhantomConfig {
  std::uint64_t seed = 0;
  Extent3 shape{64, 64, 64};
  double spacing_mm = 2.0;
  RealRange organ_semi_axis{15.0, 22.0};
  IntRange lesion_count{0, 3};
  RealRange lesion_radius{2.0, 4.0};
  RealRange lesion_hu{20.0, 60.0};
  double organ_hu = 100.0;
  double noise_sigma_hu = 20.0;
  bool include_adjacent_structure = true;
  RealRange adjacent_semi_axis{6.0, 10.0};

  void validate() const;
};

/// Defaults with every length scaled from the 64-voxel reference grid to
/// the smallest extent of `shape`.
PhantomConfig phantom_config_for(const Extent3& shape);

/// Returns a CT-like volume in HU and the organ mask. Deterministic in cfg.seed.
///
/// The mask is the voxelised organ ellipsoid; lesions are spheres fully
/// inside it and stay foreground. The optional adjacent structure shares the
/// organ's intensity and touches it, but is background in the mask.
std::pair<Volume, Mask> generate_phantom(const PhantomConfig& cfg);

}  // namespace vseg
