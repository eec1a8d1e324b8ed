#include "vseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vseg {

Objective linear_objective(const Shape& output_shape, std::uint64_t seed) {
  TensorD r(output_shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : r.values()) v = dist(rng);
  return [r](const TensorD& out) {
    if (out.shape() != r.shape()) throw ValidationError("linear objective: unexpected output shape");
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += r[i] * out[i];
    return std::pair<double, TensorD>{s, r};
  };
}

Objective head_objective(LossKind kind, std::vector<std::uint8_t> target) {
  return [kind, target = std::move(target)](const TensorD& out) { return head_loss<double>(kind, out, target); };
}

double relative_error(double analytic, double numeric, double scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6 * scale});
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::uint8_t> kink_signature(const NetworkD& net, const ForwardState<double>& st) {
  std::vector<std::uint8_t> sig;
  for (std::size_t i = 0; i < net.nodes().size(); ++i) {
    const auto kind = net.nodes()[i].kind;
    if (kind == OpKind::relu) {
      for (double v : st.outputs[i].values()) sig.push_back(v > 0.0);
    } else if (kind == OpKind::maxpool) {
      sig.insert(sig.end(), st.argmax[i].begin(), st.argmax[i].end());
    }
  }
  return sig;
}

std::vector<std::size_t> pick(std::size_t n, std::int64_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit > 0 && static_cast<std::size_t>(limit) < n) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(limit));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

GradCheckReport gradient_check(NetworkD& net, const TensorD& x, const Objective& objective,
                               const GradCheckOptions& opt) {
  const ForwardOptions fo{opt.mode, std::nullopt};
  ForwardState<double> st;
  const auto [value, dy] = objective(net.forward(x, fo, st));
  (void)value;
  BackwardOptions bo;
  bo.need_input_grad = opt.check_input;
  const NetworkGradients<double> grads = net.backward(st, dy, bo);
  const std::vector<std::uint8_t> sig0 = kink_signature(net, st);

  double scale = 0.0;
  for (const auto& g : grads.params) {
    for (double v : g.values()) scale = std::max(scale, std::abs(v));
  }
  for (double v : grads.input.values()) scale = std::max(scale, std::abs(v));

  GradCheckReport rep;
  std::mt19937_64 rng(opt.seed);
  TensorD xin = x;
  auto eval = [&](std::vector<std::uint8_t>& sig) {
    ForwardState<double> s;
    const double v = objective(net.forward(xin, fo, s)).first;
    sig = kink_signature(net, s);
    return v;
  };
  auto probe = [&](double& slot, double analytic) {
    const double orig = slot;
    std::vector<std::uint8_t> sp, sm;
    slot = orig + opt.eps;
    const double lp = eval(sp);
    slot = orig - opt.eps;
    const double lm = eval(sm);
    slot = orig;
    if (sp != sig0 || sm != sig0) {
      ++rep.skipped;
      return;
    }
    const double numeric = (lp - lm) / (2.0 * opt.eps);
    rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic, numeric, scale));
    ++rep.checked;
  };

  const auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i : pick(params[p]->size(), opt.max_per_tensor, rng)) probe((*params[p])[i], grads.params[p][i]);
  }
  if (opt.check_input) {
    for (std::size_t i : pick(xin.size(), opt.max_per_tensor, rng)) probe(xin[i], grads.input[i]);
  }
  return rep;
}

GradCheckReport loss_gradient_check(LossKind kind, std::span<const double> p, std::span<const std::uint8_t> y,
                                    double eps) {
  const LossResult<double> base = compute_loss<double>(kind, p, y);
  double scale = 0.0;
  for (double g : base.grad) scale = std::max(scale, std::abs(g));
  std::vector<double> q(p.begin(), p.end());
  GradCheckReport rep;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double orig = q[i];
    q[i] = orig + eps;
    const double lp = compute_loss<double>(kind, q, y).value;
    q[i] = orig - eps;
    const double lm = compute_loss<double>(kind, q, y).value;
    q[i] = orig;
    rep.max_rel_error = std::max(rep.max_rel_error, relative_error(base.grad[i], (lp - lm) / (2.0 * eps), scale));
    ++rep.checked;
  }
  return rep;
}

}  // namespace vseg
