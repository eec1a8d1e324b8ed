#pragma once

#include <cstdint>
#include <vector>

#include "vseg/adam.hpp"
#include "vseg/image.hpp"
#include "vseg/losses.hpp"
#include "vseg/network.hpp"
#include "vseg/unet.hpp"

namespace vseg {

/// conv5 3->128, BN, ReLU, conv5 128->64, BN, ReLU, conv1 64->2, softmax.
/// Convolutions are valid; inference overrides them with zero padding.
GraphDesc fusion_graph();
Network build_fusion_net(std::uint64_t seed = 0);

inline constexpr std::int64_t fusion_shrink = 8;

/// Softmax outputs of the three orientation models and the reference.
struct FusionCase {
  ProbVolume transversal;
  ProbVolume coronal;
  ProbVolume sagittal;
  Mask reference;
};

struct FusionTrainConfig {
  std::int64_t iterations = 100;
  std::int64_t batch_size = 2;
  std::int64_t output_tile = 16;
  LossKind loss = LossKind::ce;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

/// (1, 3, z, y, x) stack of the three probability volumes.
Tensor fusion_input(const ProbVolume& t, const ProbVolume& c, const ProbVolume& s);

/// Random output tiles with zero-filled context outside the volume; returns
/// the per-iteration loss.
std::vector<double> train_fusion(Network& net, const std::vector<FusionCase>& cases, const FusionTrainConfig& cfg);

/// Zero-padded full-volume application; output geometry equals the input.
ProbVolume fuse_cnn(const ProbVolume& t, const ProbVolume& c, const ProbVolume& s, const Network& net);

}  // namespace vseg
