#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

enum class LossKind { ce, dsc };

LossKind parse_loss(const std::string& s);
std::string to_string(LossKind k);

inline constexpr double ce_clip = 1e-7;
inline constexpr double dice_smooth = 1e-5;

template <typename T>
struct LossResult {
  double value = 0.0;
  std::vector<T> grad;  // d value / d p
};

/// Binary cross entropy, mean over voxels, p clipped to [1e-7, 1 - 1e-7].
template <typename T>
LossResult<T> loss_ce(std::span<const T> p, std::span<const std::uint8_t> y);

/// 1 - (2 sum(y p) + s) / (sum(y) + sum(p) + s).
template <typename T>
LossResult<T> loss_dsc(std::span<const T> p, std::span<const std::uint8_t> y);

template <typename T>
LossResult<T> compute_loss(LossKind kind, std::span<const T> p, std::span<const std::uint8_t> y);

/// Loss on the foreground channel of a (N, 2, spatial...) softmax output.
/// `target` holds N * spatial labels. Returns the value and the gradient
/// w.r.t. the whole softmax output (zero on the background channel).
template <typename T>
std::pair<double, BasicTensor<T>> head_loss(LossKind kind, const BasicTensor<T>& probs,
                                            std::span<const std::uint8_t> target);

/// Foreground channel of a (N, 2, spatial...) tensor, flattened.
template <typename T>
std::vector<T> foreground(const BasicTensor<T>& probs);

}  // namespace vseg
