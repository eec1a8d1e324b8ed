#include "vseg/fusion.hpp"

#include <algorithm>
#include <random>

#include "vseg/inference.hpp"
#include "vseg/window.hpp"

namespace vseg {

GraphDesc fusion_graph() {
  GraphDesc g;
  g.spatial_dims = 3;
  g.in_channels = 3;
  g.fingerprint = "fusionnet conv5x128 conv5x64 conv1x2";
  g.layers = {
      {OpKind::conv, "conv1", -1, -1, 3, 128, 5, Padding::none},
      {OpKind::batchnorm, "bn1", 0, -1, 128, 128, 1, Padding::none},
      {OpKind::relu, "relu1", 1, -1, 128, 128, 1, Padding::none},
      {OpKind::conv, "conv2", 2, -1, 128, 64, 5, Padding::none},
      {OpKind::batchnorm, "bn2", 3, -1, 64, 64, 1, Padding::none},
      {OpKind::relu, "relu2", 4, -1, 64, 64, 1, Padding::none},
      {OpKind::conv, "head.conv", 5, -1, 64, 2, 1, Padding::none},
      {OpKind::softmax, "head.softmax", 6, -1, 2, 2, 1, Padding::none},
  };
  return g;
}

Network build_fusion_net(std::uint64_t seed) { return build_network<float>(fusion_graph(), seed); }

Tensor fusion_input(const ProbVolume& t, const ProbVolume& c, const ProbVolume& s) {
  require_same_geometry(t, c, "fusion input");
  require_same_geometry(t, s, "fusion input");
  Tensor x(Shape{1, 3, t.shape[0], t.shape[1], t.shape[2]});
  const std::size_t n = t.size();
  std::copy(t.data.begin(), t.data.end(), x.data());
  std::copy(c.data.begin(), c.data.end(), x.data() + n);
  std::copy(s.data.begin(), s.data.end(), x.data() + 2 * n);
  return x;
}

std::vector<double> train_fusion(Network& net, const std::vector<FusionCase>& cases, const FusionTrainConfig& cfg) {
  cfg.adam.validate();
  if (net.fingerprint() != fusion_graph().fingerprint) throw ValidationError("not a fusion network");
  if (cases.empty()) throw ValidationError("fusion training needs at least one case");
  if (cfg.batch_size < 1 || cfg.output_tile < 1 || cfg.iterations < 0) {
    throw ValidationError("invalid fusion training configuration");
  }
  for (const auto& c : cases) {
    require_same_geometry(c.transversal, c.coronal, "fusion case");
    require_same_geometry(c.transversal, c.sagittal, "fusion case");
    require_same_geometry(c.transversal, c.reference, "fusion case");
    for (auto n : c.reference.shape) {
      if (n < cfg.output_tile) throw ValidationError("fusion case smaller than the output tile");
    }
  }
  const std::int64_t o = cfg.output_tile;
  const std::int64_t in = o + fusion_shrink;
  const std::int64_t in_vox = in * in * in, out_vox = o * o * o;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, cases.size() - 1);
  AdamState<float> adam;
  std::vector<double> losses;
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    Tensor x(Shape{cfg.batch_size, 3, in, in, in});
    std::vector<std::uint8_t> y(static_cast<std::size_t>(cfg.batch_size * out_vox));
    for (std::int64_t b = 0; b < cfg.batch_size; ++b) {
      const FusionCase& c = cases[pick(rng)];
      std::array<std::int64_t, 3> os{}, is{};
      for (std::size_t a = 0; a < 3; ++a) {
        std::uniform_int_distribution<std::int64_t> pos(0, c.reference.shape[a] - o);
        os[a] = pos(rng);
        is[a] = os[a] - fusion_shrink / 2;
      }
      const ProbVolume* ch[3] = {&c.transversal, &c.coronal, &c.sagittal};
      for (int k = 0; k < 3; ++k) {
        gather_window(ch[k]->data.data(), ch[k]->shape, is, {in, in, in}, Padding::zero,
                      x.data() + (b * 3 + k) * in_vox);
      }
      gather_window(c.reference.data.data(), c.reference.shape, os, {o, o, o}, Padding::none,
                    y.data() + b * out_vox);
    }
    ForwardState<float> st;
    const Tensor& out = net.forward(x, {Mode::train, std::nullopt}, st);
    auto [value, grad] = head_loss<float>(cfg.loss, out, y);
    const NetworkGradients<float> g = net.backward(st, grad);
    net.commit_batch_statistics(st);
    adam_step(net.parameters(), g.params, adam, cfg.adam);
    losses.push_back(value);
  }
  return losses;
}

ProbVolume fuse_cnn(const ProbVolume& t, const ProbVolume& c, const ProbVolume& s, const Network& net) {
  if (net.fingerprint() != fusion_graph().fingerprint) throw ValidationError("not a fusion network");
  const Tensor x = fusion_input(t, c, s);
  const Tensor p = net.predict(x, {Mode::infer, Padding::zero});
  return probability_volume(p, t);
}

}  // namespace vseg
