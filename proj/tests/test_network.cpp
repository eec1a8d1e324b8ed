#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "vseg/checkpoint.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/unet.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

ArchSpec toy(int dims, int levels, int base, Padding pad = Padding::none) {
  ArchSpec s;
  s.dims = dims;
  s.levels = levels;
  s.base_channels = base;
  s.conv_padding = pad;
  return s;
}

template <typename T>
BasicTensor<T> random_input(Shape s, std::uint64_t seed) {
  BasicTensor<T> t(std::move(s));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (auto& v : t.values()) v = static_cast<T>(nd(rng));
  return t;
}

Shape cube(std::int64_t n, std::int64_t c, int dims, std::int64_t e) {
  Shape s{n, c};
  for (int a = 0; a < dims; ++a) s.push_back(e);
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "vseg_test_network";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST(Network, PredictEqualsForward) {
  const ArchSpec s = toy(2, 3, 3);
  const Network net = build_unet(s, 1);
  const Tensor x = random_input<float>(cube(2, 1, 2, min_valid_input(s) + 4), 2);
  ForwardState<float> st;
  const Tensor a = net.forward(x, {}, st);
  EXPECT_EQ(net.predict(x), a);
}

TEST(Network, FloatAgreesWithDouble) {
  const ArchSpec s = toy(3, 2, 2);
  const Network net = build_unet(s, 3);
  const NetworkD netd = net.cast<double>();
  const Tensor x = random_input<float>(cube(1, 1, 3, min_valid_input(s)), 4);
  const Tensor y = net.predict(x);
  const TensorD yd = netd.predict(x.cast<double>());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], yd[i], 1e-5);
}

TEST(Network, InitializationIsSeeded) {
  const ArchSpec s = toy(2, 2, 2);
  Network a = build_unet(s, 9), b = build_unet(s, 9), c = build_unet(s, 10);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(*pa[i], *pb[i]);
    differs = differs || !(*pa[i] == *pc[i]);
  }
  EXPECT_TRUE(differs);
  // He-uniform bound and neutral batch norm.
  for (const auto& n : a.nodes()) {
    if (n.kind == OpKind::conv) {
      const double bound = std::sqrt(6.0 / (n.in_channels * n.kernel * n.kernel));
      for (float w : n.weight.values()) EXPECT_LE(std::abs(w), bound);
      for (float v : n.bias.values()) EXPECT_EQ(v, 0.0F);
    }
    if (n.kind == OpKind::batchnorm) {
      for (float v : n.gamma.values()) EXPECT_EQ(v, 1.0F);
      for (float v : n.running_var.values()) EXPECT_EQ(v, 1.0F);
    }
  }
}

TEST(Network, SoftmaxOutputSumsToOne) {
  const ArchSpec s = toy(2, 2, 2, Padding::zero);
  const Network net = build_unet(s, 5);
  const Tensor y = net.predict(random_input<float>(cube(2, 1, 2, 8), 6));
  const Layout l = y.layout();
  for (std::int64_t n = 0; n < l.n; ++n)
    for (std::int64_t i = 0; i < l.spatial(); ++i) {
      const float p0 = y[static_cast<std::size_t>((n * 2) * l.spatial() + i)];
      const float p1 = y[static_cast<std::size_t>((n * 2 + 1) * l.spatial() + i)];
      EXPECT_NEAR(p0 + p1, 1.0F, 1e-6F);
      EXPECT_GE(p1, 0.0F);
      EXPECT_LE(p1, 1.0F);
    }
}

TEST(Network, ShrinkIsSumOfKernelExtents) {
  // Two valid 3-convs per block: 4 per level on the way down and up, scaled
  // by the pooling factor of the level, minus the bottom's double count.
  for (int levels = 1; levels <= 5; ++levels) {
    const ArchSpec s = toy(2, levels, 1);
    std::int64_t shrink = 0;
    for (int l = 1; l < levels; ++l) shrink += 8 * (std::int64_t{1} << (l - 1));
    shrink += 4 * (std::int64_t{1} << (levels - 1));
    EXPECT_EQ(shrinkage(s), shrink) << levels;
    const std::int64_t in = min_valid_input(s);
    EXPECT_EQ(in - output_size(in, s), shrink);
  }
}

TEST(Network, FullyConvolutionalConsistency) {
  // A sub-tile whose start is a multiple of the pooling period reproduces
  // the corresponding block of the large tile's output.
  for (int dims : {2, 3}) {
    const ArchSpec s = toy(dims, 3, 2);
    const Network net = build_unet(s, 11);
    const std::int64_t P = s.period();
    const std::int64_t big = min_valid_input(s) + 3 * P, sub = min_valid_input(s) + P;
    const Tensor x = random_input<float>(cube(1, 1, dims, big), 12);
    const Tensor y = net.predict(x);
    const std::int64_t ob = output_size(big, s), os = output_size(sub, s);
    for (std::int64_t off : {std::int64_t{0}, P, 2 * P}) {
      Tensor xs(cube(1, 1, dims, sub));
      const std::int64_t sz = dims == 3 ? sub : 1, oz = dims == 3 ? off : 0;
      for (std::int64_t z = 0; z < sz; ++z)
        for (std::int64_t r = 0; r < sub; ++r)
          for (std::int64_t c = 0; c < sub; ++c)
            xs[static_cast<std::size_t>((z * sub + r) * sub + c)] =
                x[static_cast<std::size_t>(((z + oz) * big + r + off) * big + c + off)];
      const Tensor ys = net.predict(xs);
      const std::int64_t obz = dims == 3 ? ob : 1, osz = dims == 3 ? os : 1;
      const std::int64_t plane_b = obz * ob * ob, plane_s = osz * os * os;
      for (std::int64_t ch = 0; ch < 2; ++ch)
        for (std::int64_t z = 0; z < osz; ++z)
          for (std::int64_t r = 0; r < os; ++r)
            for (std::int64_t c = 0; c < os; ++c) {
              const float a = ys[static_cast<std::size_t>(ch * plane_s + (z * os + r) * os + c)];
              const float b = y[static_cast<std::size_t>(ch * plane_b + ((z + oz) * ob + r + off) * ob + c + off)];
              ASSERT_NEAR(a, b, 1e-5F) << dims << "D offset " << off;
            }
    }
  }
}

TEST(GradCheck, LinearPointwiseConv) {
  NetworkD net(2, 2, "linear");
  net.add_conv("c", -1, 2, 3, 1, Padding::none);
  net.initialize(1);
  const TensorD x = random_input<double>(cube(2, 2, 2, 3), 2);
  const auto rep = gradient_check(net, x, linear_objective(Shape{2, 3, 3, 3}, 3));
  EXPECT_LT(rep.max_rel_error, 1e-6);
  EXPECT_EQ(rep.skipped, 0);
  EXPECT_GT(rep.checked, 0);
}

TEST(GradCheck, ToyUNetBothLossesBothModes) {
  for (int dims : {2, 3}) {
    const ArchSpec s = toy(dims, 2, 2);
    const std::int64_t in = min_valid_input(s) + (dims == 2 ? 2 : 0);
    const std::int64_t out = output_size(in, s);
    for (LossKind kind : {LossKind::ce, LossKind::dsc}) {
      for (Mode mode : {Mode::train, Mode::infer}) {
        NetworkD net = build_network<double>(unet_graph(s), 21);
        const TensorD x = random_input<double>(cube(2, 1, dims, in), 22);
        std::vector<std::uint8_t> target(static_cast<std::size_t>(2 * (dims == 2 ? out * out : out * out * out)));
        std::mt19937_64 rng(23);
        for (auto& t : target) t = static_cast<std::uint8_t>(rng() & 1U);
        GradCheckOptions opt;
        opt.mode = mode;
        opt.max_per_tensor = dims == 2 ? 12 : 4;
        opt.seed = 24;
        const auto rep = gradient_check(net, x, head_objective(kind, target), opt);
        EXPECT_LT(rep.max_rel_error, 1e-3) << dims << "D " << to_string(kind);
        EXPECT_GT(rep.checked, 50);
      }
    }
  }
}

TEST(GradCheck, ZeroPaddedNetwork) {
  const ArchSpec s = toy(2, 2, 2, Padding::zero);
  NetworkD net = build_network<double>(unet_graph(s), 31);
  const TensorD x = random_input<double>(cube(2, 1, 2, 6), 32);
  GradCheckOptions opt;
  opt.mode = Mode::train;
  opt.max_per_tensor = 10;
  const auto rep = gradient_check(net, x, linear_objective(Shape{2, 2, 6, 6}, 33), opt);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

TEST(Network, CommitBatchStatistics) {
  const ArchSpec s = toy(2, 2, 2);
  Network net = build_unet(s, 41);
  const Tensor x = random_input<float>(cube(2, 1, 2, min_valid_input(s)), 42);
  ForwardState<float> st;
  net.forward(x, {Mode::train, std::nullopt}, st);
  const Tensor before = net.nodes()[1].running_mean;
  net.commit_batch_statistics(st);
  const auto& bn = net.nodes()[1];
  ASSERT_EQ(bn.kind, OpKind::batchnorm);
  for (std::size_t c = 0; c < bn.running_mean.size(); ++c) {
    EXPECT_NEAR(bn.running_mean[c], 0.9 * before[c] + 0.1 * st.bn[1].mean[c], 1e-6);
  }
}

TEST(Checkpoint, ByteExactRoundTrip) {
  const ArchSpec s = toy(3, 2, 2);
  Network a = build_unet(s, 51);
  // Perturb running statistics so buffers are covered too.
  for (auto& n : a.nodes()) {
    if (n.kind == OpKind::batchnorm) n.running_var.fill(2.5F);
  }
  save_checkpoint(scratch("a.ckpt").string(), a);
  Network b = build_unet(s, 52);
  load_checkpoint(scratch("a.ckpt").string(), b);
  auto ta = a.state_tensors(), tb = b.state_tensors();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].name, tb[i].name);
    EXPECT_EQ(*ta[i].tensor, *tb[i].tensor) << ta[i].name;
  }
  save_checkpoint(scratch("b.ckpt").string(), b);
  std::ifstream fa(scratch("a.ckpt"), std::ios::binary), fb(scratch("b.ckpt"), std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.substr(0, 8), "VSEGCKPT");
}

TEST(Checkpoint, Errors) {
  const ArchSpec s = toy(2, 2, 2);
  Network a = build_unet(s, 61);
  save_checkpoint(scratch("c.ckpt").string(), a);
  Network other = build_unet(toy(2, 2, 3), 0);
  EXPECT_THROW(load_checkpoint(scratch("c.ckpt").string(), other), ValidationError);
  EXPECT_THROW(load_checkpoint(scratch("missing.ckpt").string(), a), IoError);
  fs::resize_file(scratch("c.ckpt"), fs::file_size(scratch("c.ckpt")) - 3);
  EXPECT_THROW(load_checkpoint(scratch("c.ckpt").string(), a), IoError);
  {
    std::ofstream f(scratch("d.ckpt"), std::ios::binary);
    f << "NOTACKPT0000000000";
  }
  EXPECT_THROW(load_checkpoint(scratch("d.ckpt").string(), a), IoError);
}
