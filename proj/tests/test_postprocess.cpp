#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "vseg/postprocess.hpp"

using namespace vseg;

namespace {

Mask random_mask(std::mt19937_64& rng, double density, std::int64_t max_extent = 16) {
  const Extent3 shape{1 + static_cast<std::int64_t>(rng() % max_extent), 1 + static_cast<std::int64_t>(rng() % max_extent),
                      1 + static_cast<std::int64_t>(rng() % max_extent)};
  Mask m(shape);
  std::bernoulli_distribution b(density);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  return m;
}

/// Breadth-first flood fill over 26 neighbours; sizes in order of first voxel.
std::vector<std::int64_t> flood_fill_sizes(const Mask& m) {
  std::vector<int> seen(m.size(), 0);
  std::vector<std::int64_t> sizes;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m.data[start] || seen[start]) continue;
    std::vector<std::size_t> queue{start};
    seen[start] = 1;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto i = static_cast<std::int64_t>(queue[q]);
      const std::int64_t z = i / (m.shape[1] * m.shape[2]), y = i / m.shape[2] % m.shape[1], x = i % m.shape[2];
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const std::int64_t a = z + dz, b = y + dy, c = x + dx;
            if (a < 0 || b < 0 || c < 0 || a >= m.shape[0] || b >= m.shape[1] || c >= m.shape[2]) continue;
            const std::size_t j = m.index(a, b, c);
            if (m.data[j] && !seen[j]) {
              seen[j] = 1;
              queue.push_back(j);
            }
          }
    }
    sizes.push_back(static_cast<std::int64_t>(queue.size()));
  }
  return sizes;
}

std::int64_t count(const Mask& m) { return std::count(m.data.begin(), m.data.end(), 1); }

}  // namespace

TEST(Threshold, Examples) {
  ProbVolume p({2, 2, 2}, {1, 1, 1}, {}, 0.3F);
  p.data[0] = 0.5F;
  p.data[1] = 0.0F;
  const Mask all = threshold(p, 0.0);
  EXPECT_EQ(count(all), 8);
  EXPECT_EQ(count(threshold(p, 1.0)), 0);
  const Mask half = threshold(p, 0.5);
  EXPECT_EQ(half.data[0], 1);
  EXPECT_EQ(count(half), 1);
  EXPECT_TRUE(same_geometry(half, p));
  EXPECT_THROW(threshold(p, -0.1), ValidationError);
  EXPECT_THROW(threshold(p, 1.5), ValidationError);
}

TEST(LargestComponent, KeepsBiggest) {
  Mask m({1, 5, 10});
  for (int x = 0; x < 3; ++x) m.at(0, 0, x) = 1;
  for (int x = 5; x < 10; ++x) m.at(0, 4, x) = 1;
  const Mask out = largest_component(m);
  EXPECT_EQ(count(out), 5);
  for (int x = 5; x < 10; ++x) EXPECT_EQ(out.at(0, 4, x), 1);
  EXPECT_EQ((component_sizes(m)), (std::vector<std::int64_t>{3, 5}));
}

TEST(LargestComponent, Empty) {
  const Mask m({3, 4, 5});
  EXPECT_EQ(count(largest_component(m)), 0);
  EXPECT_TRUE(component_sizes(m).empty());
}

TEST(LargestComponent, TieGoesToSmallestIndex) {
  Mask m({1, 5, 10});
  for (int x = 7; x < 10; ++x) m.at(0, 0, x) = 1;
  for (int x = 0; x < 3; ++x) m.at(0, 4, x) = 1;
  const Mask out = largest_component(m);
  EXPECT_EQ(count(out), 3);
  EXPECT_EQ(out.at(0, 0, 7), 1);
}

TEST(LargestComponent, DiagonalNeighboursConnect) {
  Mask m({3, 3, 3});
  m.at(0, 0, 0) = m.at(1, 1, 1) = m.at(2, 2, 2) = 1;
  EXPECT_EQ(component_sizes(m), (std::vector<std::int64_t>{3}));
}

TEST(LargestComponent, MatchesFloodFillOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 150; ++trial) {
    const Mask m = random_mask(rng, 0.05 + 0.3 * (trial % 5) / 4.0);
    const auto expected = flood_fill_sizes(m);
    ASSERT_EQ(component_sizes(m), expected) << trial;
    const Mask out = largest_component(m);
    const std::int64_t best = expected.empty() ? 0 : *std::max_element(expected.begin(), expected.end());
    EXPECT_EQ(count(out), best);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_LE(out.data[i], m.data[i]);
    EXPECT_LE(flood_fill_sizes(out).size(), 1U);
    EXPECT_EQ(largest_component(out).data, out.data);
  }
}
