#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vseg/adam.hpp"
#include "vseg/image.hpp"
#include "vseg/inference.hpp"
#include "vseg/losses.hpp"
#include "vseg/network.hpp"
#include "vseg/unet.hpp"

namespace vseg {

struct Case {
  std::string id;
  Volume image;
  Mask mask;
};

struct TrainConfig {
  LossKind loss = LossKind::ce;
  AdamConfig adam;
  std::int64_t batch_size = 4;
  std::int64_t iterations = 200;
  std::int64_t validation_interval = 50;
  std::uint64_t seed = 0;
  /// Input tile extent per axis.
  std::int64_t tile_size = 132;
  /// Slice orientation for 2D networks.
  SliceAxis axis = SliceAxis::transversal;
  /// Output tile used for validation inference; 0 selects the default.
  std::int64_t inference_tile = 0;

  void validate(const ArchSpec& spec) const;
};

struct ValidationRecord {
  std::int64_t iteration = 0;
  double mean_dice = 0.0;
};

struct TrainHistory {
  std::vector<double> loss;  // loss[i] belongs to iteration i + 1
  std::vector<ValidationRecord> validation;
  std::int64_t best_iteration = 0;  // 0: initial parameters

  /// iteration,loss,val_dice; val_dice is empty where no validation ran.
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  Network best;
  TrainHistory history;
};

struct Minibatch {
  Tensor input;                      // (B, 1, tile...)
  std::vector<std::uint8_t> target;  // B * output voxels
};

/// Output extent for an input tile under the spec's training padding.
std::int64_t training_output_size(std::int64_t tile_size, const ArchSpec& spec);

/// Draws `batch` tiles: uniformly random case, uniformly random output
/// position (a random slice for 2D specs), reflect-padded input window and
/// the centre-aligned target crop.
Minibatch sample_minibatch(const std::vector<Case>& cases, const ArchSpec& spec, std::int64_t tile_size,
                           std::int64_t batch, SliceAxis axis, std::mt19937_64& rng);

/// Adam training with periodic validation; returns the parameters with the
/// highest mean validation Dice (earliest on ties).
TrainResult train(const Network& init, const ArchSpec& spec, const std::vector<Case>& train_cases,
                  const std::vector<Case>& val_cases, const TrainConfig& cfg);

/// Mean Dice of thresholded (0.5) predictions, no postprocessing.
double validation_dice(const Network& net, const ArchSpec& spec, const std::vector<Case>& cases, SliceAxis axis,
                       std::int64_t inference_tile = 0);

}  // namespace vseg
