#pragma once

#include <cstdint>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update. Moments are allocated on the first call.
template <typename T>
void adam_step(const std::vector<BasicTensor<T>*>& params, const std::vector<BasicTensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& cfg);

}  // namespace vseg
