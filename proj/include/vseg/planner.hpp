#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/unet.hpp"

namespace vseg {

/// Input extent whose network output is `tile`; inverse of output_size.
SpatialSize padded_input(const SpatialSize& tile, const ArchSpec& spec);

std::int64_t product(const SpatialSize& s);

/// 100 * batch * prod(tile) / (batch * prod(padded)); 100 for padded convs.
double loss_voxel_ratio(const SpatialSize& tile, const ArchSpec& spec, std::int64_t batch);

/// Input plus every node output, in scalars, for one batch item.
std::int64_t activation_elements(const GraphDesc& g, const SpatialSize& input);

/// 4 * 2 * activations * batch + 16 * parameters bytes.
std::int64_t memory_estimate(const GraphDesc& g, const SpatialSize& input, std::int64_t batch);
std::int64_t memory_estimate(const ArchSpec& spec, const SpatialSize& tile, std::int64_t batch);

/// Largest batch whose estimate fits in budget_bytes; 0 if none does.
std::int64_t max_batch(const ArchSpec& spec, const SpatialSize& tile, std::int64_t budget_bytes);

inline constexpr std::int64_t gpu_budget_bytes = std::int64_t{8} << 30;

struct TilePlanReport {
  std::string label;
  std::string spec_id;
  std::int64_t batch = 1;  // batch size printed in the table
  SpatialSize tile;
  std::int64_t tile_voxels = 0;  // times batch
  SpatialSize padded;
  std::int64_t padded_voxels = 0;  // times batch
  double ratio_pct = 0.0;
  std::string printed_ratio;  // ratio as printed in the table
  bool flagged = false;       // computed ratio disagrees with the printed one
  std::int64_t estimated_bytes = 0;
  std::int64_t model_max_batch = 0;
};

/// The five configurations of the affordable-batch-size table.
std::vector<TilePlanReport> table3_report(std::int64_t budget_bytes = gpu_budget_bytes);

/// Rounds `ratio` to the decimals of `printed` and compares the strings.
bool matches_printed(double ratio, const std::string& printed);

std::string format_table3(const std::vector<TilePlanReport>& rows, bool csv);

}  // namespace vseg
