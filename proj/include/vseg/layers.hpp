#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

/// Border handling for convolutions. `none` is a valid convolution that
/// shrinks each axis by kernel - 1; the others keep the spatial size.
enum class Padding { none, zero, reflect };

enum class Mode { train, infer };

/// Mirror index without edge repetition (…, 2, 1, 0, 1, 2, …), folded
/// repeatedly for offsets larger than n - 1.
std::int64_t reflect_index(std::int64_t i, std::int64_t n);

using Pad3 = std::array<std::int64_t, 3>;

/// Pads the canonical (D, H, W) axes by lo/hi voxels.
template <typename T>
BasicTensor<T> pad_spatial(const BasicTensor<T>& x, const Pad3& lo, const Pad3& hi, Padding mode);

/// Adjoint of pad_spatial: folds gradients of the padded tensor back.
template <typename T>
BasicTensor<T> pad_spatial_adjoint(const BasicTensor<T>& dy, const Shape& x_shape, const Pad3& lo, const Pad3& hi,
                                   Padding mode);

// Convolution, stride 1, cross-correlation. Weight shape (Cout, Cin, k...),
// one kernel extent per spatial axis of x, bias shape (Cout).
template <typename T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, Padding pad);

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx;  // empty unless requested
  BasicTensor<T> dw;
  BasicTensor<T> db;
};

template <typename T>
ConvGrads<T> conv_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, Padding pad, const BasicTensor<T>& dy,
                           bool need_dx);

// Non-overlapping 2-per-axis max pooling over every spatial axis.
template <typename T>
struct PoolResult {
  BasicTensor<T> y;
  std::vector<std::uint8_t> argmax;  // window offset of the first maximum
};

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& x);

/// Routes dy to the recorded argmax. With `spread`, every window element
/// receives the gradient instead (dependency mode for footprint probes).
template <typename T>
BasicTensor<T> maxpool_backward(const Shape& x_shape, const std::vector<std::uint8_t>& argmax,
                                const BasicTensor<T>& dy, bool spread = false);

// Transposed convolution, kernel 2 and stride 2 per axis.
// Weight shape (Cin, Cout, 2...), bias (Cout).
template <typename T>
BasicTensor<T> upconv_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <typename T>
ConvGrads<T> upconv_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                             bool need_dx);

inline constexpr double batchnorm_eps = 1e-5;
inline constexpr double batchnorm_momentum = 0.9;

template <typename T>
struct BatchNormCache {
  std::vector<double> mean;     // statistics used for normalisation
  std::vector<double> inv_std;
  std::vector<double> batch_var_unbiased;  // train mode only
  Mode mode = Mode::infer;
};

/// Per-channel normalisation. Train mode uses batch statistics (needs at
/// least 2 samples per channel); infer mode uses the running statistics.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 const BasicTensor<T>& running_mean, const BasicTensor<T>& running_var, Mode mode,
                                 BatchNormCache<T>* cache);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dgamma;
  BasicTensor<T> dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache, const BasicTensor<T>& dy);

/// running = momentum * running + (1 - momentum) * batch.
template <typename T>
void batchnorm_update_running(BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                              const BatchNormCache<T>& cache);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy);

/// Softmax across the channel axis, per voxel.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy);

/// Centre-crops `skip` to the spatial size of `up` and concatenates
/// (skip channels first) along the channel axis.
template <typename T>
BasicTensor<T> concat_crop(const BasicTensor<T>& skip, const BasicTensor<T>& up);

/// Crop offset per canonical axis; throws on odd difference or skip < up.
Pad3 crop_offsets(const Shape& skip, const Shape& up);

template <typename T>
struct ConcatGrads {
  BasicTensor<T> dskip;
  BasicTensor<T> dup;
};

template <typename T>
ConcatGrads<T> concat_crop_backward(const Shape& skip_shape, const Shape& up_shape, const BasicTensor<T>& dy);

}  // namespace vseg
