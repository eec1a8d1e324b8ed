#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>

#include "vseg/losses.hpp"
#include "vseg/network.hpp"

namespace vseg {

/// Scalar objective of the network output: value and gradient w.r.t. it.
using Objective = std::function<std::pair<double, TensorD>(const TensorD&)>;

/// sum(r * out) with fixed random weights r; exercises the network alone.
Objective linear_objective(const Shape& output_shape, std::uint64_t seed);
/// CE or Dice loss on the foreground channel of a softmax head.
Objective head_objective(LossKind kind, std::vector<std::uint8_t> target);

struct GradCheckOptions {
  double eps = 1e-3;
  Mode mode = Mode::infer;
  bool check_input = true;
  /// Entries tested per tensor; 0 tests all of them.
  std::int64_t max_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  /// Entries whose perturbation changed a ReLU sign or a pooling argmax.
  std::int64_t skipped = 0;
};

/// |a - n| / max(|a|, |n|, 1e-6 * scale).
double relative_error(double analytic, double numeric, double scale);

/// Compares backward() against central finite differences for every
/// parameter tensor (and the input) of a double-precision network.
GradCheckReport gradient_check(NetworkD& net, const TensorD& x, const Objective& objective,
                               const GradCheckOptions& opt = {});

/// Central-difference check of a loss function's own gradient.
GradCheckReport loss_gradient_check(LossKind kind, std::span<const double> p, std::span<const std::uint8_t> y,
                                    double eps = 1e-6);

}  // namespace vseg
