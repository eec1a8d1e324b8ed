#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "vseg/adam.hpp"
#include "vseg/losses.hpp"
#include "vseg/phantom.hpp"
#include "vseg/training.hpp"

namespace fs = std::filesystem;
using namespace vseg;

TEST(LossCe, Examples) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<std::uint8_t> y{1, 0};
  EXPECT_NEAR(loss_ce<double>(p, y).value, std::log(2.0), 1e-12);
  const std::vector<double> perfect{1.0, 0.0};
  EXPECT_LE(loss_ce<double>(perfect, y).value, 1e-6);
  EXPECT_THROW(loss_ce<double>(std::span<const double>{}, std::span<const std::uint8_t>{}), ValidationError);
}

TEST(LossCe, GradientFormula) {
  const std::vector<double> p{0.2, 0.7, 0.9};
  const std::vector<std::uint8_t> y{1, 0, 1};
  const auto r = loss_ce<double>(p, y);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(r.grad[i], -(y[i] / p[i] - (1.0 - y[i]) / (1.0 - p[i])) / 3.0, 1e-12);
  }
}

TEST(LossCe, FlatOutsideClip) {
  const std::vector<double> p{1e-9, 1.0 - 1e-10, 0.5};
  const std::vector<std::uint8_t> y{1, 0, 1};
  const auto r = loss_ce<double>(p, y);
  EXPECT_EQ(r.grad[0], 0.0);
  EXPECT_EQ(r.grad[1], 0.0);
  EXPECT_NEAR(r.grad[2], -2.0 / 3.0, 1e-12);
  std::vector<double> q = p;
  q[0] = 2e-9;
  EXPECT_EQ(loss_ce<double>(q, y).value, r.value);
}

TEST(LossDsc, Examples) {
  const std::vector<double> p{1, 0, 1, 0};
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  EXPECT_LE(loss_dsc<double>(p, y).value, 1e-5);
  const std::vector<double> half{0.5, 0.5, 0.5, 0.5};
  const std::vector<std::uint8_t> one{1, 0, 0, 0};
  EXPECT_NEAR(loss_dsc<double>(half, one).value, 1.0 - 1.0 / 3.0, 1e-4);
  const std::vector<double> zeros(4, 0.0);
  const std::vector<std::uint8_t> empty(4, 0);
  EXPECT_NEAR(loss_dsc<double>(zeros, empty).value, 0.0, 1e-12);
}

TEST(Losses, RangesAndPermutationInvariance) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(1 + rng() % 30);
    std::vector<std::uint8_t> y(p.size());
    for (auto& v : p) v = u(rng);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng() & 1U);
    const double ce = loss_ce<double>(p, y).value, dsc = loss_dsc<double>(p, y).value;
    EXPECT_GE(ce, 0.0);
    EXPECT_GE(dsc, 0.0);
    EXPECT_LE(dsc, 1.0);
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pp(p.size());
    std::vector<std::uint8_t> yp(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      pp[i] = p[perm[i]];
      yp[i] = y[perm[i]];
    }
    EXPECT_NEAR(loss_ce<double>(pp, yp).value, ce, 1e-12);
    EXPECT_NEAR(loss_dsc<double>(pp, yp).value, dsc, 1e-12);
  }
}

TEST(Losses, ZeroIffBinaryMatch) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> y(2 + rng() % 20);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng() & 1U);
    y[0] = 1;
    std::vector<double> p(y.begin(), y.end());
    EXPECT_LE(loss_ce<double>(p, y).value, 1e-6);
    EXPECT_LE(loss_dsc<double>(p, y).value, 1e-5);
    p[1] = 1.0 - p[1];
    EXPECT_GT(loss_ce<double>(p, y).value, 1e-3);
    EXPECT_GT(loss_dsc<double>(p, y).value, 1e-3);
  }
}

TEST(HeadLoss, GradientOnlyOnForeground) {
  Tensor probs(Shape{1, 2, 3});
  probs.storage() = {0.3F, 0.6F, 0.9F, 0.7F, 0.4F, 0.1F};
  const std::vector<std::uint8_t> t{1, 0, 0};
  const auto [value, g] = head_loss<float>(LossKind::ce, probs, t);
  const std::vector<float> fg = foreground(probs);
  EXPECT_EQ(fg, (std::vector<float>{0.7F, 0.4F, 0.1F}));
  EXPECT_NEAR(value, loss_ce<float>(fg, t).value, 1e-6);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(g[static_cast<std::size_t>(i)], 0.0F);
  EXPECT_THROW(head_loss<float>(LossKind::ce, probs, std::vector<std::uint8_t>{1, 0}), ValidationError);
}

TEST(Adam, FirstStepIsLearningRate) {
  for (double g0 : {0.3, -5.0, 1e-4}) {
    Tensor w(Shape{1}, 2.0F), g(Shape{1}, static_cast<float>(g0));
    AdamState<float> st;
    AdamConfig cfg;
    adam_step<float>({&w}, {g}, st, cfg);
    EXPECT_NEAR(w[0] - 2.0, -cfg.learning_rate * (g0 > 0 ? 1 : -1), 1e-3 * cfg.learning_rate);
    EXPECT_EQ(st.t, 1);
  }
}

TEST(Adam, ZeroGradientKeepsParameters) {
  Tensor w(Shape{3}, 1.5F), g(Shape{3}, 0.0F);
  AdamState<float> st;
  for (int i = 0; i < 20; ++i) adam_step<float>({&w}, {g}, st, {});
  for (float v : w.values()) EXPECT_EQ(v, 1.5F);
}

TEST(Adam, QuadraticConverges) {
  // f(w) = (w - 3)^2, lr 0.1.
  TensorD w(Shape{1}, -4.0);
  AdamState<double> st;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  int steps = 0;
  for (; steps < 500; ++steps) {
    TensorD g(Shape{1}, 2.0 * (w[0] - 3.0));
    adam_step<double>({&w}, {g}, st, cfg);
  }
  EXPECT_NEAR(w[0], 3.0, 1e-3);
}

TEST(Adam, MatchesScalarSimulation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  TensorD w(Shape{4});
  for (auto& v : w.values()) v = nd(rng);
  std::vector<double> ref(w.values().begin(), w.values().end()), m(4, 0.0), v(4, 0.0);
  AdamState<double> st;
  const AdamConfig cfg;
  for (int t = 1; t <= 30; ++t) {
    TensorD g(Shape{4});
    for (auto& x : g.values()) x = nd(rng);
    adam_step<double>({&w}, {g}, st, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t)), vh = v[i] / (1 - std::pow(cfg.beta2, t));
      ref[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], ref[i], 1e-12);
  for (double x : st.v[0].values()) EXPECT_GE(x, 0.0);
}

TEST(Adam, Errors) {
  Tensor w(Shape{2}), g(Shape{3});
  AdamState<float> st;
  EXPECT_THROW(adam_step<float>({&w}, {g}, st, {}), ValidationError);
  AdamConfig bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

namespace {

std::vector<Case> phantom_cases(int n, std::uint64_t seed0, std::int64_t size = 32) {
  std::vector<Case> cases;
  for (int i = 0; i < n; ++i) {
    PhantomConfig cfg;
    cfg.seed = seed0 + static_cast<std::uint64_t>(i);
    cfg.shape = {size, size, size};
    cfg.organ_semi_axis = {8.0, 11.0};
    cfg.adjacent_semi_axis = {3.0, 5.0};
    cfg.lesion_radius = {1.0, 2.0};
    auto [v, m] = generate_phantom(cfg);
    cases.push_back({"p" + std::to_string(i), std::move(v), std::move(m)});
  }
  return cases;
}

ArchSpec tiny() {
  ArchSpec s;
  s.dims = 2;
  s.levels = 2;
  s.base_channels = 4;
  return s;
}

}  // namespace

TEST(Minibatch, WholeVolumeTileAndOffset) {
  ArchSpec s = arch_preset("unet2d4");
  s.base_channels = 1;
  Case c;
  c.id = "grid";
  c.image = Volume({1, 44, 44});
  c.mask = Mask({1, 44, 44});
  std::mt19937_64 rng(4);
  for (std::int64_t y = 0; y < 44; ++y)
    for (std::int64_t x = 0; x < 44; ++x) {
      c.image.at(0, y, x) = static_cast<float>(y * 100 + x);
      c.mask.at(0, y, x) = static_cast<std::uint8_t>(rng() & 1U);
    }
  const Minibatch mb = sample_minibatch({c}, s, 132, 2, SliceAxis::transversal, rng);
  ASSERT_EQ(mb.input.shape(), (Shape{2, 1, 132, 132}));
  EXPECT_EQ(mb.target, [&] {
    std::vector<std::uint8_t> t(c.mask.data);
    t.insert(t.end(), c.mask.data.begin(), c.mask.data.end());
    return t;
  }());
  // The output voxel (0, 0) sits 44 voxels inside the input tile.
  EXPECT_EQ(mb.input[44 * 132 + 44], 0.0F);
  EXPECT_EQ(mb.input[(44 + 5) * 132 + 44 + 7], 507.0F);
  // Reflected context: input (43, 44) mirrors row 1.
  EXPECT_EQ(mb.input[43 * 132 + 44], 100.0F);
}

TEST(Minibatch, AllBackgroundAndErrors) {
  const ArchSpec s = tiny();
  Case c{"bg", Volume({20, 20, 20}), Mask({20, 20, 20})};
  std::mt19937_64 rng(5);
  const std::int64_t tile = min_valid_input(s) + 4;
  const Minibatch mb = sample_minibatch({c}, s, tile, 3, SliceAxis::coronal, rng);
  for (auto t : mb.target) EXPECT_EQ(t, 0);
  EXPECT_EQ(mb.target.size(), static_cast<std::size_t>(3 * training_output_size(tile, s) * training_output_size(tile, s)));
  Case smallc{"small", Volume({2, 2, 2}), Mask({2, 2, 2})};
  EXPECT_THROW(sample_minibatch({smallc}, s, tile, 1, SliceAxis::transversal, rng), ValidationError);
}

TEST(Train, ZeroIterations) {
  const ArchSpec s = tiny();
  const auto cases = phantom_cases(2, 100);
  const Network init = build_unet(s, 1);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.tile_size = min_valid_input(s) + 8;
  const TrainResult r = train(init, s, cases, cases, cfg);
  EXPECT_TRUE(r.history.loss.empty());
  EXPECT_TRUE(r.history.validation.empty());
  EXPECT_EQ(r.history.best_iteration, 0);
  const auto pa = r.best.parameters();
  const auto pb = init.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
}

TEST(Train, DeterministicHistoryAndCsv) {
  const ArchSpec s = tiny();
  const auto tr = phantom_cases(3, 200), va = phantom_cases(1, 300);
  TrainConfig cfg;
  cfg.iterations = 6;
  cfg.validation_interval = 4;
  cfg.batch_size = 2;
  cfg.tile_size = min_valid_input(s) + 8;
  cfg.seed = 7;
  const TrainResult a = train(build_unet(s, 1), s, tr, va, cfg);
  const TrainResult b = train(build_unet(s, 1), s, tr, va, cfg);
  EXPECT_EQ(a.history.loss, b.history.loss);
  ASSERT_EQ(a.history.validation.size(), 2U);  // iterations 4 and 6
  EXPECT_EQ(a.history.validation[0].iteration, 4);
  EXPECT_EQ(a.history.validation[1].iteration, 6);
  EXPECT_EQ(a.history.validation[1].mean_dice, b.history.validation[1].mean_dice);
  const fs::path csv = fs::temp_directory_path() / "vseg_test_history.csv";
  a.history.write_csv(csv);
  std::ifstream f(csv);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "iteration,loss,val_dice");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST(Train, RejectsBadConfig) {
  const ArchSpec s = tiny();
  const auto cases = phantom_cases(1, 400);
  TrainConfig cfg;
  cfg.tile_size = min_valid_input(s) + 1;
  EXPECT_THROW(train(build_unet(s, 1), s, cases, cases, cfg), ValidationError);
  cfg.tile_size = min_valid_input(s);
  cfg.batch_size = 0;
  EXPECT_THROW(train(build_unet(s, 1), s, cases, cases, cfg), ValidationError);
  cfg.batch_size = 1;
  EXPECT_THROW(train(build_unet(s, 1), s, cases, {}, cfg), ValidationError);
}

TEST(Train, LossDecreasesBetweenFirstAndLastWindow) {
  const ArchSpec s = tiny();
  const auto tr = phantom_cases(4, 500), va = phantom_cases(1, 600);
  for (LossKind kind : {LossKind::ce, LossKind::dsc}) {
    TrainConfig cfg;
    cfg.loss = kind;
    cfg.iterations = 100;
    cfg.validation_interval = 100;
    cfg.batch_size = 4;
    cfg.tile_size = min_valid_input(s) + 12;
    cfg.adam.learning_rate = 3e-3;
    cfg.seed = 9;
    const TrainResult r = train(build_unet(s, 2), s, tr, va, cfg);
    const auto& l = r.history.loss;
    const double first = std::accumulate(l.begin(), l.begin() + 50, 0.0) / 50;
    const double last = std::accumulate(l.end() - 50, l.end(), 0.0) / 50;
    EXPECT_LE(last, first) << to_string(kind);
  }
}
