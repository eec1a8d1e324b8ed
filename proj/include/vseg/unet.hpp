#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/layers.hpp"
#include "vseg/network.hpp"

namespace vseg {

enum class FilterScheme { standard, cicek_doubling };

struct ArchSpec {
  std::string id = "custom";
  int dims = 2;
  int levels = 4;
  int base_channels = 64;
  FilterScheme scheme = FilterScheme::standard;
  Padding conv_padding = Padding::none;
  int classes = 2;
  int in_channels = 1;

  void validate() const;
  /// Stable text identifying everything that determines parameter shapes.
  std::string fingerprint() const;
  /// Pooling factor between the finest and coarsest level, 2^(levels-1).
  std::int64_t period() const { return std::int64_t{1} << (levels - 1); }
};

/// unet2d4, unet2d5, unet3d, unet3d-pad, unet3d-naive.
ArchSpec arch_preset(const std::string& name);
std::vector<std::string> arch_preset_names();

/// Parameter-free description of one graph node; mirrors Node<T>.
struct LayerDesc {
  OpKind kind = OpKind::relu;
  std::string name;
  int input = -1;
  int skip = -1;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  Padding padding = Padding::none;
};

struct GraphDesc {
  int spatial_dims = 2;
  int in_channels = 1;
  std::string fingerprint;
  std::vector<LayerDesc> layers;
};

GraphDesc unet_graph(const ArchSpec& spec);

template <typename T>
BasicNetwork<T> build_network(const GraphDesc& g, std::uint64_t seed);

/// Graph of `spec`, He-initialised from `seed`.
Network build_unet(const ArchSpec& spec, std::uint64_t seed = 0);

using SpatialSize = std::vector<std::int64_t>;

/// Spatial size of every node output for the given input size; throws
/// ValidationError on an odd extent before pooling, a non-positive extent,
/// or an invalid crop.
std::vector<SpatialSize> simulate_sizes(const GraphDesc& g, const SpatialSize& input,
                                        Padding conv_padding_override = Padding::none, bool use_override = false);

/// Output extent along one axis.
std::int64_t output_size(std::int64_t input, const ArchSpec& spec);
bool valid_input(std::int64_t input, const ArchSpec& spec);
std::int64_t min_valid_input(const ArchSpec& spec);
/// input - output for valid-convolution specs, 0 for padded ones.
std::int64_t shrinkage(const ArchSpec& spec);

/// Extent of input voxels that influence a single output voxel, maximised
/// over the output phases modulo period(); exact interval propagation.
std::int64_t receptive_field(const ArchSpec& spec);
std::int64_t receptive_field(const GraphDesc& g, std::int64_t probe_size, std::int64_t phases);

/// Probe input extent used by receptive_field and empirical_footprint.
std::int64_t default_probe_size(const ArchSpec& spec);

/// Backpropagates unit gradients from the pre-softmax output at the diagonal
/// voxels c + t (t < phases) of a probe network (|w| + 1e-3, identity batch
/// norm, positive input) and returns the largest bounding-box extent of
/// nonzero input gradient per axis.
SpatialSize empirical_footprint(const Network& net, std::int64_t probe_size, std::int64_t phases);
SpatialSize empirical_footprint(const ArchSpec& spec, const Network& net);

std::int64_t param_count(const GraphDesc& g);
std::int64_t param_count(const ArchSpec& spec);

struct LayerRow {
  std::string name;
  std::string kind;
  int kernel = 1;
  int in_channels = 0;
  int out_channels = 0;
  SpatialSize size;
};

std::vector<LayerRow> layer_table(const ArchSpec& spec, std::int64_t reference_input);
std::string format_layer_table(const std::vector<LayerRow>& rows, bool csv);

}  // namespace vseg
