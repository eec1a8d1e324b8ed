#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "vseg/dataset.hpp"
#include "vseg/resample.hpp"
#include "vseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "vseg_test_volume_io";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST(VolumeIo, RoundTripZeros) {
  Volume v({2, 2, 2});
  write_volume(v, scratch("zeros.vseg"));
  const Volume r = read_float_volume(scratch("zeros.vseg"));
  EXPECT_EQ(r.shape, v.shape);
  EXPECT_EQ(r.spacing_mm, v.spacing_mm);
  EXPECT_EQ(r.origin_mm, v.origin_mm);
  EXPECT_EQ(r.data, v.data);
}

TEST(VolumeIo, RoundTripAllDtypesBitExact) {
  std::mt19937_64 rng(5);
  RawVolume raw({3, 4, 5}, {0.8, 0.6, 0.6}, {-12.5, 3.25, 1e-3});
  for (auto& x : raw.data) x = static_cast<std::int16_t>(static_cast<int>(rng() % 65536) - 32768);
  write_volume(raw, scratch("raw.vseg"));
  const RawVolume rr = read_raw_volume(scratch("raw.vseg"));
  EXPECT_EQ(rr.data, raw.data);
  EXPECT_EQ(rr.spacing_mm, raw.spacing_mm);
  EXPECT_EQ(rr.origin_mm, raw.origin_mm);

  Mask m({2, 3, 7}, {0.1, 0.2, 0.3});
  for (auto& x : m.data) x = static_cast<std::uint8_t>(rng() & 1U);
  write_volume(m, scratch("mask.vseg"));
  EXPECT_EQ(read_mask(scratch("mask.vseg")).data, m.data);

  Volume f({5, 1, 2}, {1.0 / 3.0, 2.0, 0.7});
  std::normal_distribution<float> nd;
  for (auto& x : f.data) x = nd(rng);
  write_volume(AnyImage{f}, scratch("f.vseg"));
  const AnyImage any = read_volume(scratch("f.vseg"));
  ASSERT_TRUE(std::holds_alternative<Volume>(any));
  EXPECT_EQ(std::get<Volume>(any).data, f.data);
  EXPECT_EQ(std::get<Volume>(any).spacing_mm, f.spacing_mm);
  EXPECT_EQ(dtype_of(any), DType::f32);
}

TEST(VolumeIo, SpacingFromScannerRoundTrips) {
  Volume v({2, 2, 2}, {0.8, 0.6, 0.6});
  write_volume(v, scratch("spacing.vseg"));
  EXPECT_EQ(read_float_volume(scratch("spacing.vseg")).spacing_mm, (Vec3{0.8, 0.6, 0.6}));
}

TEST(VolumeIo, HeaderFields) {
  Mask m({1, 2, 3});
  write_volume(m, scratch("hdr.vseg"));
  std::ifstream f(scratch("hdr.vseg"));
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  for (const char* key : {"\"shape\"", "\"spacing_mm\"", "\"origin_mm\"", "\"dtype\"", "\"u8\"", "\"byte_order\"",
                          "\"little\"", "\"hdr.raw\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(fs::file_size(scratch("hdr.raw")), 6U);
}

TEST(VolumeIo, RawSizeMismatch) {
  Volume v({2, 2, 2});
  write_volume(v, scratch("short.vseg"));
  fs::resize_file(scratch("short.raw"), 7 * sizeof(float));
  EXPECT_THROW(read_float_volume(scratch("short.vseg")), IoError);
}

TEST(VolumeIo, MissingAndMalformed) {
  EXPECT_THROW(read_volume(scratch("does_not_exist.vseg")), IoError);
  {
    std::ofstream f(scratch("bad.vseg"));
    f << "{not json";
  }
  EXPECT_THROW(read_volume(scratch("bad.vseg")), IoError);
  {
    std::ofstream f(scratch("dtype.vseg"));
    f << R"({"shape":[1,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"dtype":"f64","byte_order":"little","data":"dtype.raw"})";
  }
  EXPECT_THROW(read_volume(scratch("dtype.vseg")), IoError);
}

TEST(VolumeIo, TypedReaderRejectsOtherDtype) {
  Mask m({1, 1, 2});
  write_volume(m, scratch("typed.vseg"));
  EXPECT_THROW(read_float_volume(scratch("typed.vseg")), IoError);
  EXPECT_NO_THROW(read_as_float(scratch("typed.vseg")));
}

TEST(Rescale, Examples) {
  RawVolume raw({1, 1, 3});
  raw.data = {1000, 0, -7};
  EXPECT_FLOAT_EQ(hounsfield_rescale(raw, 1.0, -1024.0).data[0], -24.0F);
  const Volume id = hounsfield_rescale(raw, 1.0, 0.0);
  EXPECT_FLOAT_EQ(id.data[0], 1000.0F);
  EXPECT_FLOAT_EQ(id.data[2], -7.0F);
  EXPECT_FLOAT_EQ(hounsfield_rescale(raw, 2.0, 5.0).data[1], 5.0F);
  EXPECT_THROW(hounsfield_rescale(raw, 0.0, 1.0), ValidationError);
}

TEST(Rescale, ComposesAffinely) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Volume v({2, 3, 4});
    for (auto& x : v.data) x = static_cast<float>(u(rng) * 100.0);
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (std::abs(a) < 0.1) a = 0.5;
    if (std::abs(c) < 0.1) c = -0.5;
    const Volume twice = hounsfield_rescale(hounsfield_rescale(v, a, b), c, d);
    const Volume once = hounsfield_rescale(v, a * c, b * c + d);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_NEAR(twice.data[i], once.data[i], 1e-4 * std::max(1.0, std::abs(static_cast<double>(once.data[i]))));
    }
  }
}

TEST(Lanczos, KernelValues) {
  EXPECT_DOUBLE_EQ(lanczos_kernel(0.0), 1.0);
  for (int k = 1; k < 3; ++k) EXPECT_NEAR(lanczos_kernel(k), 0.0, 1e-15);
  EXPECT_EQ(lanczos_kernel(3.0), 0.0);
  EXPECT_EQ(lanczos_kernel(-4.2), 0.0);
  const double t = 0.5;
  const double expect = std::sin(M_PI * t) / (M_PI * t) * std::sin(M_PI * t / 3) / (M_PI * t / 3);
  EXPECT_NEAR(lanczos_kernel(t), expect, 1e-15);
  EXPECT_NEAR(lanczos_kernel(-t), expect, 1e-15);
}

TEST(Lanczos, ConstantVolume) {
  for (double target : {0.7, 1.0, 1.9, 3.3}) {
    Volume v({9, 10, 11}, {1.2, 0.8, 0.6}, {}, 100.0F);
    const Volume r = resample_lanczos(v, target);
    EXPECT_EQ(r.spacing_mm, (Vec3{target, target, target}));
    for (int a = 0; a < 3; ++a) EXPECT_EQ(r.shape[a], resampled_extent(v.shape[a], v.spacing_mm[a], target));
    for (float x : r.data) EXPECT_NEAR(x, 100.0F, 1e-4F);
  }
}

TEST(Lanczos, IdentityAtSameSpacing) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-500, 500);
  Volume v({6, 7, 8}, {1.5, 1.5, 1.5}, {3, 2, 1});
  for (auto& x : v.data) x = u(rng);
  const Volume r = resample_lanczos(v, 1.5);
  ASSERT_EQ(r.shape, v.shape);
  EXPECT_EQ(r.origin_mm, v.origin_mm);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(r.data[i], v.data[i], 1e-5 * std::max(1.0F, std::abs(v.data[i])));
}

TEST(Lanczos, ImpulseDownsampledTwice) {
  // Oracle: stretched kernel at offsets (2i - j0)/2, divided by the sum over
  // in-volume taps, then clamped to the input range [0, 1].
  const std::int64_t n = 24;
  for (std::int64_t j0 : {0, 5, 11, 12, 23}) {
    Volume v({1, 1, n}, {1.0, 1.0, 1.0});
    v.data[static_cast<std::size_t>(j0)] = 1.0F;
    const Volume r = resample_lanczos(v, 2.0);
    ASSERT_EQ(r.shape[2], n / 2);
    for (std::int64_t i = 0; i < n / 2; ++i) {
      double sum = 0.0;
      for (std::int64_t j = 0; j < n; ++j) sum += lanczos_kernel((2.0 * i - j) / 2.0);
      const double w = lanczos_kernel((2.0 * i - j0) / 2.0) / sum;
      EXPECT_NEAR(r.data[static_cast<std::size_t>(i)], std::clamp(w, 0.0, 1.0), 1e-6) << j0 << ' ' << i;
    }
  }
}

TEST(Lanczos, ClampedToInputRange) {
  Volume v({1, 1, 20});
  for (std::int64_t i = 10; i < 20; ++i) v.data[static_cast<std::size_t>(i)] = 1000.0F;
  const Volume r = resample_lanczos(v, 0.3);
  for (float x : r.data) {
    EXPECT_GE(x, 0.0F);
    EXPECT_LE(x, 1000.0F);
  }
}

TEST(Lanczos, RejectsBadSpacing) {
  Volume v({2, 2, 2});
  EXPECT_THROW(resample_lanczos(v, 0.0), ValidationError);
  EXPECT_THROW(resample_lanczos(v, -1.0), ValidationError);
  Mask m({2, 2, 2});
  EXPECT_THROW(resample_nearest(m, 0.0), ValidationError);
}

TEST(Nearest, ConstantAndIdentity) {
  Mask ones({5, 6, 7}, {0.8, 0.6, 0.6}, {}, 1);
  const Mask r = resample_nearest(ones, 1.1);
  for (auto x : r.data) EXPECT_EQ(x, 1);
  std::mt19937_64 rng(4);
  Mask m({4, 5, 6}, {2, 2, 2});
  for (auto& x : m.data) x = static_cast<std::uint8_t>(rng() & 1U);
  EXPECT_EQ(resample_nearest(m, 2.0).data, m.data);
}

TEST(Nearest, HalfSpaceDownsampled) {
  const std::int64_t n = 17;
  Mask m({3, 4, n});
  for (std::int64_t z = 0; z < 3; ++z)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t x = 0; x < n / 2; ++x) m.at(z, y, x) = 1;
  const Mask r = resample_nearest(m, 2.0);
  ASSERT_EQ(r.shape[2], resampled_extent(n, 1.0, 2.0));
  for (std::int64_t x = 0; x < r.shape[2]; ++x) {
    // Output x sits at input coordinate 2x; nearest index is 2x itself.
    const std::int64_t src = std::min<std::int64_t>(2 * x, n - 1);
    EXPECT_EQ(r.at(0, 0, x), src < n / 2 ? 1 : 0) << x;
  }
}

TEST(Nearest, PreservesBinaryValues) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Mask m({3 + static_cast<std::int64_t>(rng() % 5), 4, 5}, {0.5 + (rng() % 3), 0.7, 1.3});
    for (auto& x : m.data) x = static_cast<std::uint8_t>(rng() & 1U);
    for (auto x : resample_nearest(m, 0.9).data) EXPECT_LE(x, 1);
  }
}

TEST(ResampledExtent, RoundsHalfAway) {
  EXPECT_EQ(resampled_extent(5, 1.0, 2.0), 3);  // 2.5 -> 3
  EXPECT_EQ(resampled_extent(3, 1.0, 2.0), 2);  // 1.5 -> 2
  EXPECT_EQ(resampled_extent(1, 0.5, 10.0), 1);
  EXPECT_EQ(resampled_extent(512, 0.6, 2.0), 154);
}

namespace {

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("case" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(Split, ClinicalCounts) {
  const auto s = split_dataset(make_ids(219), {146, 33, 40}, 1);
  EXPECT_EQ(s.train_ids.size(), 146U);
  EXPECT_EQ(s.validation_ids.size(), 33U);
  EXPECT_EQ(s.test_ids.size(), 40U);
}

TEST(Split, Degenerate) {
  const auto ids = make_ids(7);
  const auto s = split_dataset(ids, {7, 0, 0}, 3);
  EXPECT_EQ(std::set<std::string>(s.train_ids.begin(), s.train_ids.end()),
            std::set<std::string>(ids.begin(), ids.end()));
  EXPECT_TRUE(s.validation_ids.empty());
  EXPECT_TRUE(s.test_ids.empty());
}

TEST(Split, DeterministicAndSeedDependent) {
  const auto ids = make_ids(30);
  const auto a = split_dataset(ids, {20, 5, 5}, 42);
  const auto b = split_dataset(ids, {20, 5, 5}, 42);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.test_ids, b.test_ids);
  const auto c = split_dataset(ids, {20, 5, 5}, 43);
  EXPECT_NE(a.train_ids, c.train_ids);
}

TEST(Split, PartitionProperty) {
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int n = 1 + static_cast<int>(rng() % 40);
    const std::size_t tr = rng() % static_cast<std::size_t>(n + 1);
    const std::size_t va = rng() % (static_cast<std::size_t>(n) - tr + 1);
    const auto ids = make_ids(n);
    const auto s = split_dataset(ids, {tr, va, static_cast<std::size_t>(n) - tr - va}, seed);
    std::set<std::string> all;
    for (const auto* part : {&s.train_ids, &s.validation_ids, &s.test_ids}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), static_cast<std::size_t>(n));
    EXPECT_EQ(s.train_ids.size() + s.validation_ids.size() + s.test_ids.size(), static_cast<std::size_t>(n));
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset(make_ids(5), {2, 2, 2}, 0), ValidationError);
  EXPECT_THROW(split_dataset({"a", "a"}, {2, 0, 0}, 0), ValidationError);
}

TEST(Split, FileRoundTrip) {
  const auto s = split_dataset(make_ids(10), {6, 2, 2}, 5);
  write_split(s, scratch("split.json"));
  const auto r = read_split(scratch("split.json"));
  EXPECT_EQ(r.train_ids, s.train_ids);
  EXPECT_EQ(r.validation_ids, s.validation_ids);
  EXPECT_EQ(r.test_ids, s.test_ids);
  EXPECT_THROW(read_split(scratch("nope.json")), IoError);
}
