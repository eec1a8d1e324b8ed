#include "vseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/error.hpp"

namespace vseg {

LossKind parse_loss(const std::string& s) {
  if (s == "ce") return LossKind::ce;
  if (s == "dsc") return LossKind::dsc;
  throw ValidationError("unknown loss '" + s + "' (expected ce or dsc)");
}

std::string to_string(LossKind k) { return k == LossKind::ce ? "ce" : "dsc"; }

namespace {

template <typename T>
void check_inputs(std::span<const T> p, std::span<const std::uint8_t> y) {
  if (p.empty()) throw ValidationError("loss of empty input");
  if (p.size() != y.size()) throw ValidationError("loss: prediction and target sizes differ");
}

}  // namespace

template <typename T>
LossResult<T> loss_ce(std::span<const T> p, std::span<const std::uint8_t> y) {
  check_inputs(p, y);
  const double n = static_cast<double>(p.size());
  LossResult<T> r;
  r.grad.resize(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), ce_clip, 1.0 - ce_clip);
    const double t = y[i] ? 1.0 : 0.0;
    sum += t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    // flat where clipped
    const bool clipped = static_cast<double>(p[i]) < ce_clip || static_cast<double>(p[i]) > 1.0 - ce_clip;
    r.grad[i] = clipped ? T{0} : static_cast<T>(-(t / q - (1.0 - t) / (1.0 - q)) / n);
  }
  r.value = -sum / n;
  return r;
}

template <typename T>
LossResult<T> loss_dsc(std::span<const T> p, std::span<const std::uint8_t> y) {
  check_inputs(p, y);
  double syp = 0.0, sy = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double t = y[i] ? 1.0 : 0.0;
    syp += t * static_cast<double>(p[i]);
    sy += t;
    sp += static_cast<double>(p[i]);
  }
  const double a = 2.0 * syp + dice_smooth;
  const double b = sy + sp + dice_smooth;
  LossResult<T> r;
  r.value = 1.0 - a / b;
  r.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double t = y[i] ? 1.0 : 0.0;
    r.grad[i] = static_cast<T>(-(2.0 * t * b - a) / (b * b));
  }
  return r;
}

template <typename T>
LossResult<T> compute_loss(LossKind kind, std::span<const T> p, std::span<const std::uint8_t> y) {
  return kind == LossKind::ce ? loss_ce(p, y) : loss_dsc(p, y);
}

template <typename T>
std::vector<T> foreground(const BasicTensor<T>& probs) {
  const Layout l = probs.layout();
  if (l.c != 2) throw ValidationError("expected a 2-channel probability tensor, got " + shape_string(probs.shape()));
  const std::int64_t sp = l.spatial();
  std::vector<T> out(static_cast<std::size_t>(l.n * sp));
  for (std::int64_t n = 0; n < l.n; ++n) {
    std::copy_n(probs.data() + (n * 2 + 1) * sp, sp, out.data() + n * sp);
  }
  return out;
}

template <typename T>
std::pair<double, BasicTensor<T>> head_loss(LossKind kind, const BasicTensor<T>& probs,
                                            std::span<const std::uint8_t> target) {
  const std::vector<T> p = foreground(probs);
  const LossResult<T> r = compute_loss<T>(kind, p, target);
  const Layout l = probs.layout();
  const std::int64_t sp = l.spatial();
  BasicTensor<T> g(probs.shape());
  for (std::int64_t n = 0; n < l.n; ++n) {
    std::copy_n(r.grad.data() + n * sp, sp, g.data() + (n * 2 + 1) * sp);
  }
  return {r.value, std::move(g)};
}

#define VSEG_INSTANTIATE(T)                                                                                   \
  template LossResult<T> loss_ce<T>(std::span<const T>, std::span<const std::uint8_t>);                     \
  template LossResult<T> loss_dsc<T>(std::span<const T>, std::span<const std::uint8_t>);                    \
  template LossResult<T> compute_loss<T>(LossKind, std::span<const T>, std::span<const std::uint8_t>);      \
  template std::vector<T> foreground<T>(const BasicTensor<T>&);                                             \
  template std::pair<double, BasicTensor<T>> head_loss<T>(LossKind, const BasicTensor<T>&,                  \
                                                          std::span<const std::uint8_t>);
VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
