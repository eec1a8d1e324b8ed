#include <gtest/gtest.h>

#include <set>

#include "vseg/phantom.hpp"
#include "vseg/postprocess.hpp"

using namespace vseg;

TEST(Phantom, Deterministic) {
  PhantomConfig cfg;
  cfg.seed = 17;
  const auto a = generate_phantom(cfg);
  const auto b = generate_phantom(cfg);
  EXPECT_EQ(a.first.data, b.first.data);
  EXPECT_EQ(a.second.data, b.second.data);
  cfg.seed = 18;
  EXPECT_NE(generate_phantom(cfg).first.data, a.first.data);
}

TEST(Phantom, NoiseFreeTwoValues) {
  PhantomConfig cfg;
  cfg.seed = 3;
  cfg.noise_sigma_hu = 0.0;
  cfg.lesion_count = {0, 0};
  cfg.include_adjacent_structure = false;
  const auto [v, m] = generate_phantom(cfg);
  std::set<float> values(v.data.begin(), v.data.end());
  EXPECT_EQ(values, (std::set<float>{0.0F, 100.0F}));
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.data[i] == 100.0F, m.data[i] == 1);
}

TEST(Phantom, ForegroundFraction) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PhantomConfig cfg;
    cfg.seed = seed;
    const auto [v, m] = generate_phantom(cfg);
    std::int64_t fg = 0;
    for (auto x : m.data) fg += x;
    const double frac = static_cast<double>(fg) / static_cast<double>(m.size());
    EXPECT_GE(frac, 0.05) << seed;
    EXPECT_LE(frac, 0.25) << seed;
  }
}

TEST(Phantom, MaskIsOneComponent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PhantomConfig cfg;
    cfg.seed = seed;
    const auto m = generate_phantom(cfg).second;
    EXPECT_EQ(component_sizes(m).size(), 1U) << seed;
    for (auto x : m.data) EXPECT_LE(x, 1);
  }
}

TEST(Phantom, ForegroundBrighterThanBackground) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PhantomConfig cfg;
    cfg.seed = seed;
    cfg.noise_sigma_hu = 0.0;
    const auto [v, m] = generate_phantom(cfg);
    double fg = 0, bg = 0;
    std::int64_t nf = 0, nb = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (m.data[i]) {
        fg += v.data[i];
        ++nf;
      } else {
        bg += v.data[i];
        ++nb;
      }
    }
    EXPECT_GE(fg / nf, bg / nb + 50.0) << seed;
  }
}

TEST(Phantom, AdjacentStructureIsBackgroundAtOrganIntensity) {
  PhantomConfig cfg;
  cfg.seed = 5;
  cfg.noise_sigma_hu = 0.0;
  cfg.lesion_count = {0, 0};
  const auto [v, m] = generate_phantom(cfg);
  std::int64_t bright_bg = 0;
  for (std::size_t i = 0; i < v.size(); ++i) bright_bg += (m.data[i] == 0 && v.data[i] == 100.0F);
  EXPECT_GT(bright_bg, 0);
}

TEST(Phantom, Geometry) {
  PhantomConfig cfg = phantom_config_for({32, 40, 48});
  cfg.spacing_mm = 1.5;
  const auto [v, m] = generate_phantom(cfg);
  EXPECT_EQ(v.shape, (Extent3{32, 40, 48}));
  EXPECT_EQ(v.spacing_mm, (Vec3{1.5, 1.5, 1.5}));
  EXPECT_TRUE(same_geometry(v, m));
}

TEST(Phantom, ScaledConfig) {
  const PhantomConfig half = phantom_config_for({32, 40, 32});
  EXPECT_DOUBLE_EQ(half.organ_semi_axis.lo, PhantomConfig{}.organ_semi_axis.lo / 2);
  EXPECT_DOUBLE_EQ(half.adjacent_semi_axis.hi, PhantomConfig{}.adjacent_semi_axis.hi / 2);
  EXPECT_EQ(phantom_config_for({64, 64, 64}).organ_semi_axis.hi, PhantomConfig{}.organ_semi_axis.hi);
  EXPECT_NO_THROW(half.validate());
}

TEST(Phantom, ConfigValidation) {
  PhantomConfig cfg;
  cfg.shape = {31, 64, 64};
  EXPECT_THROW(generate_phantom(cfg), ValidationError);
  cfg = {};
  cfg.lesion_radius = {4.0, 2.0};
  EXPECT_THROW(generate_phantom(cfg), ValidationError);
  cfg = {};
  cfg.spacing_mm = 0.0;
  EXPECT_THROW(generate_phantom(cfg), ValidationError);
}
