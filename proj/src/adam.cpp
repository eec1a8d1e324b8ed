#include "vseg/adam.hpp"

#include <cmath>

#include "vseg/error.hpp"

namespace vseg {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
}

template <typename T>
void adam_step(const std::vector<BasicTensor<T>*>& params, const std::vector<BasicTensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& cfg) {
  cfg.validate();
  if (params.size() != grads.size()) throw ValidationError("adam: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw ValidationError("adam: gradient shape " + shape_string(grads[i].shape()) + " does not match parameter " +
                            shape_string(params[i]->shape()));
    }
  }
  if (state.t == 0 && state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ValidationError("adam: state does not match parameters");
  state.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<T>& p = *params[i];
    BasicTensor<T>& m = state.m[i];
    BasicTensor<T>& v = state.v[i];
    const BasicTensor<T>& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = cfg.beta1 * static_cast<double>(m[k]) + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * static_cast<double>(v[k]) + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double step = cfg.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + cfg.epsilon);
      p[k] = static_cast<T>(static_cast<double>(p[k]) - step);
    }
  }
}

template void adam_step<float>(const std::vector<BasicTensor<float>*>&, const std::vector<BasicTensor<float>>&,
                               AdamState<float>&, const AdamConfig&);
template void adam_step<double>(const std::vector<BasicTensor<double>*>&, const std::vector<BasicTensor<double>>&,
                                AdamState<double>&, const AdamConfig&);

}  // namespace vseg
