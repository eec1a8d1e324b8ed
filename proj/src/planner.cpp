#include "vseg/planner.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace vseg {

std::int64_t product(const SpatialSize& s) {
  std::int64_t p = 1;
  for (auto v : s) p *= v;
  return p;
}

SpatialSize padded_input(const SpatialSize& tile, const ArchSpec& spec) {
  if (static_cast<int>(tile.size()) != spec.dims) throw ValidationError("tile rank does not match the spec");
  SpatialSize out;
  if (spec.conv_padding != Padding::none) {
    for (auto t : tile) {
      if (t < 1 || t % spec.period() != 0) {
        throw ValidationError("tile extent " + std::to_string(t) + " is not a multiple of " +
                              std::to_string(spec.period()));
      }
      out.push_back(t);
    }
    return out;
  }
  const std::int64_t s = shrinkage(spec);
  for (auto t : tile) {
    if (t < 1 || !valid_input(t + s, spec) || output_size(t + s, spec) != t) {
      throw ValidationError("tile extent " + std::to_string(t) + " is not a valid output size");
    }
    out.push_back(t + s);
  }
  return out;
}

double loss_voxel_ratio(const SpatialSize& tile, const ArchSpec& spec, std::int64_t batch) {
  if (batch < 1) throw ValidationError("batch must be >= 1");
  const SpatialSize p = padded_input(tile, spec);
  return 100.0 * static_cast<double>(batch * product(tile)) / static_cast<double>(batch * product(p));
}

std::int64_t activation_elements(const GraphDesc& g, const SpatialSize& input) {
  const auto sizes = simulate_sizes(g, input);
  std::int64_t total = g.in_channels * product(input);
  for (std::size_t i = 0; i < g.layers.size(); ++i) total += g.layers[i].out_channels * product(sizes[i]);
  return total;
}

std::int64_t memory_estimate(const GraphDesc& g, const SpatialSize& input, std::int64_t batch) {
  if (batch < 0) throw ValidationError("batch must be >= 0");
  return 4 * 2 * activation_elements(g, input) * batch + 16 * param_count(g);
}

std::int64_t memory_estimate(const ArchSpec& spec, const SpatialSize& tile, std::int64_t batch) {
  return memory_estimate(unet_graph(spec), padded_input(tile, spec), batch);
}

std::int64_t max_batch(const ArchSpec& spec, const SpatialSize& tile, std::int64_t budget_bytes) {
  const GraphDesc g = unet_graph(spec);
  const SpatialSize in = padded_input(tile, spec);
  const std::int64_t fixed = 16 * param_count(g);
  const std::int64_t per_item = 8 * activation_elements(g, in);
  if (budget_bytes < fixed + per_item) return 0;
  return (budget_bytes - fixed) / per_item;
}

bool matches_printed(double ratio, const std::string& printed) {
  const auto dot = printed.find('.');
  const int decimals = dot == std::string::npos ? 0 : static_cast<int>(printed.size() - dot - 1);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, ratio);
  return printed == buf;
}

std::vector<TilePlanReport> table3_report(std::int64_t budget_bytes) {
  struct Row {
    const char* label;
    const char* spec;
    std::int64_t batch;
    SpatialSize tile;
    const char* printed;
  };
  const Row rows[] = {
      {"2D U-net (4 levels)", "unet2d4", 21, {140, 140}, "38"},
      {"2D U-net (5 levels)", "unet2d5", 16, {116, 116}, "15"},
      {"3D U-net (4 levels, naive)", "unet3d-naive", 1, {20, 20, 20}, "0.64"},
      {"3D U-net (4 levels)", "unet3d", 1, {68, 60, 20}, "3.5"},
      {"3D U-net_pad (4 levels)", "unet3d-pad", 1, {104, 104, 64}, "100"},
  };
  std::vector<TilePlanReport> out;
  for (const Row& r : rows) {
    const ArchSpec spec = arch_preset(r.spec);
    TilePlanReport t;
    t.label = r.label;
    t.spec_id = r.spec;
    t.batch = r.batch;
    t.tile = r.tile;
    t.padded = padded_input(r.tile, spec);
    t.tile_voxels = r.batch * product(t.tile);
    t.padded_voxels = r.batch * product(t.padded);
    t.ratio_pct = loss_voxel_ratio(t.tile, spec, r.batch);
    t.printed_ratio = r.printed;
    t.flagged = !matches_printed(t.ratio_pct, r.printed);
    t.estimated_bytes = memory_estimate(spec, t.tile, r.batch);
    t.model_max_batch = max_batch(spec, t.tile, budget_bytes);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

std::string dims_string(const SpatialSize& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

std::string format_table3(const std::vector<TilePlanReport>& rows, bool csv) {
  std::ostringstream os;
  if (csv) {
    os << "label,spec,batch,tile,tile_voxels,padded,padded_voxels,ratio_pct,printed_ratio,flagged,estimated_bytes,"
          "model_max_batch\n";
    for (const auto& r : rows) {
      os << '"' << r.label << "\"," << r.spec_id << ',' << r.batch << ',' << dims_string(r.tile) << ','
         << r.tile_voxels << ',' << dims_string(r.padded) << ',' << r.padded_voxels << ',' << std::fixed
         << std::setprecision(4) << r.ratio_pct << ',' << r.printed_ratio << ',' << (r.flagged ? 1 : 0) << ','
         << r.estimated_bytes << ',' << r.model_max_batch << '\n';
    }
    return os.str();
  }
  os << std::left << std::setw(28) << "configuration" << std::right << std::setw(6) << "batch" << std::setw(14)
     << "tile" << std::setw(11) << "voxels" << std::setw(14) << "padded" << std::setw(11) << "voxels" << std::setw(10)
     << "ratio %" << std::setw(8) << "table" << std::setw(12) << "est. MiB" << std::setw(10) << "max b" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(28) << r.label << std::right << std::setw(6) << r.batch << std::setw(14)
       << dims_string(r.tile) << std::setw(11) << r.tile_voxels << std::setw(14) << dims_string(r.padded)
       << std::setw(11) << r.padded_voxels << std::setw(10) << std::fixed << std::setprecision(2) << r.ratio_pct
       << std::setw(8) << r.printed_ratio << std::setw(12) << std::setprecision(0)
       << static_cast<double>(r.estimated_bytes) / (1 << 20) << std::setw(10) << r.model_max_batch
       << (r.flagged ? "  (differs from table)" : "") << '\n';
  }
  return os.str();
}

}  // namespace vseg
