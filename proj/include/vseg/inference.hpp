#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/image.hpp"
#include "vseg/network.hpp"
#include "vseg/unet.hpp"

namespace vseg {

/// transversal fixes z, coronal fixes y, sagittal fixes x.
enum class SliceAxis { transversal, coronal, sagittal };

SliceAxis parse_axis(const std::string& s);
std::string to_string(SliceAxis a);
int axis_index(SliceAxis a);

/// Valid-size arithmetic of a fully-convolutional network along one axis:
/// valid outputs are min_output + k * period, and input = output + shrink.
struct TileGeometry {
  std::int64_t period = 1;
  std::int64_t shrink = 0;
  std::int64_t min_output = 1;

  bool valid_output(std::int64_t o) const { return o >= min_output && (o - min_output) % period == 0; }
  /// Smallest valid output >= n.
  std::int64_t fit_output(std::int64_t n) const;
};

/// Geometry of `spec` evaluated with `conv_padding` in every spatial conv.
TileGeometry tile_geometry(const ArchSpec& spec, Padding conv_padding);
inline TileGeometry tile_geometry(const ArchSpec& spec) { return tile_geometry(spec, spec.conv_padding); }

/// Output region written by one network evaluation, per spatial axis.
struct Tile {
  SpatialSize out_start;
  SpatialSize out_size;
  SpatialSize window_output;  // network output extent, >= out_size
  SpatialSize in_start;       // may be negative; reflect padding beyond the volume
  SpatialSize in_size;
};

/// Partitions `shape` into output regions of at most max_output_tile voxels
/// per axis whose starts are multiples of the pooling period, so stitched
/// results equal a single whole-volume evaluation.
std::vector<Tile> tile_plan(const SpatialSize& shape, const TileGeometry& geom, std::int64_t max_output_tile);
std::vector<Tile> tile_plan(const SpatialSize& shape, const ArchSpec& spec, std::int64_t max_output_tile);

/// Evaluates `net` over a (1, C, spatial...) image tile by tile and returns
/// the stitched (1, classes, spatial...) output.
Tensor predict_tiled(const Network& net, const TileGeometry& geom, const Tensor& image, std::int64_t max_output_tile,
                     const ForwardOptions& opt = {});

inline constexpr std::int64_t default_tile_2d = 132;
inline constexpr std::int64_t default_tile_3d = 20;

/// Segments every slice perpendicular to `axis` independently with a 2D net.
ProbVolume segment_slicewise(const Network& net, const ArchSpec& spec, const Volume& v, SliceAxis axis,
                             std::int64_t max_output_tile = default_tile_2d);

/// Tiled 3D application. Zero-padded specs run with valid convolutions.
ProbVolume segment_3d(const Network& net, const ArchSpec& spec, const Volume& v,
                      std::int64_t max_output_tile = default_tile_3d);

/// Dispatches on spec.dims; `axis` is used by 2D nets only.
ProbVolume segment(const Network& net, const ArchSpec& spec, const Volume& v, SliceAxis axis,
                   std::int64_t max_output_tile = 0);

/// Voxelwise mean of the three orientations; foreground iff mean >= 0.5.
Mask fuse_mean(const ProbVolume& t, const ProbVolume& c, const ProbVolume& s);

/// Foreground channel of a (1, 2, z, y, x) tensor as a ProbVolume.
ProbVolume probability_volume(const Tensor& probs, const Volume& geometry);

}  // namespace vseg
