#pragma once

#include <cstdint>
#include <vector>

#include "vseg/image.hpp"

namespace vseg {

/// Foreground iff p >= t; t must lie in [0, 1].
Mask threshold(const ProbVolume& p, double t);

/// Sizes of the 26-connected foreground components, ordered by their
/// smallest linear voxel index.
std::vector<std::int64_t> component_sizes(const Mask& m);

/// Keeps the largest 26-connected component; ties go to the component that
/// contains the smallest linear index.
Mask largest_component(const Mask& m);

}  // namespace vseg
