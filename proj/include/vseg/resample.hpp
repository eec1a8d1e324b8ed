#pragma once

#include "vseg/image.hpp"

namespace vseg {

/// Applies out = slope * raw + intercept voxelwise. Rejects slope == 0.
Volume hounsfield_rescale(const RawVolume& raw, double slope, double intercept);
/// Same affine map on an already floating-point volume.
Volume hounsfield_rescale(const Volume& v, double slope, double intercept);

/// Lanczos window support (kernel is zero for |t| >= lanczos_order).
inline constexpr int lanczos_order = 3;

/// sinc(t) * sinc(t / 3) for |t| < 3, else 0, with sinc(t) = sin(pi t)/(pi t).
double lanczos_kernel(double t);

/// Number of output voxels along an axis of `n` voxels resampled from
/// `spacing` to `target`: round-half-away-from-zero of n*spacing/target, >= 1.
std::int64_t resampled_extent(std::int64_t n, double spacing, double target);

/// Separable Lanczos-3 resampling to an isotropic grid of `target_spacing_mm`.
///
/// Output voxel i along an axis sits at input coordinate i*target/spacing
/// (the origin is kept). When downsampling, the kernel is stretched by
/// target/spacing so it acts as an anti-aliasing filter. Weights of each
/// output sample are normalised to sum to one; taps outside the volume are
/// dropped. Results are clamped to the input's value range.
Volume resample_lanczos(const Volume& v, double target_spacing_mm);

/// Nearest-neighbour resampling onto the same output grid as resample_lanczos.
Mask resample_nearest(const Mask& m, double target_spacing_mm);

}  // namespace vseg
