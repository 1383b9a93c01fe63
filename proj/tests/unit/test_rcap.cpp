#include <gtest/gtest.h>

#include "fslqa/metrics.hpp"
#include "fslqa/rcap.hpp"
#include "test_support.hpp"

using namespace fslqa;
using fslqa::testing::random_mask;
using fslqa::testing::rect_mask;

namespace {

std::size_t hamming(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

bool inside_some_window(const std::vector<RcapWindow>& windows, int w, int r, int c) {
  for (const auto& win : windows)
    if (r >= win.paste_row && r < win.paste_row + w && c >= win.paste_col && c < win.paste_col + w) return true;
  return false;
}

// Rotation by a quarter turn clockwise and horizontal flip, written directly.
BinaryMask rot90(const BinaryMask& m) {
  const int n = m.width();
  BinaryMask out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out.at(c, n - 1 - r) = m.at(r, c);
  return out;
}

BinaryMask hflip(const BinaryMask& m) {
  const int n = m.width();
  BinaryMask out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out.at(r, n - 1 - c) = m.at(r, c);
  return out;
}

}  // namespace

TEST(RcapConfig, Validation) {
  EXPECT_NO_THROW(RcapConfig{}.validate());
  EXPECT_THROW((RcapConfig{100, 1, 0, false}.validate()), Error);
  EXPECT_THROW((RcapConfig{0, 1, 0, false}.validate()), Error);
  EXPECT_THROW((RcapConfig{40, 0, 0, false}.validate()), Error);
  EXPECT_THROW((RcapConfig{40, 5, 0, false}.validate()), Error);
}

TEST(Rcap, BlankMaskIsUnchanged) {
  const BinaryMask blank(50, 40);
  for (int kappa = 1; kappa <= 4; ++kappa) {
    const auto res = rcap_traced(blank, RcapConfig{20, kappa, 9, false});
    EXPECT_EQ(res.mask, blank);
    EXPECT_TRUE(res.windows.empty());
  }
}

TEST(Rcap, ComplementOfSolidWindowRemovesItsArea) {
  // Solid 80x80 square; a 9x9 window centred at least 4 px inside it is all foreground.
  const auto t = rect_mask(120, 120, 20, 20, 80, 80);
  int seen = 0;
  for (std::uint64_t seed = 0; seen < 10 && seed < 500; ++seed) {
    const auto res = rcap_traced(t, RcapConfig{9, 1, seed, false});
    const auto& win = res.windows.at(0);
    const bool interior = win.center_row >= 24 && win.center_row < 96 && win.center_col >= 24 && win.center_col < 96;
    if (win.flag != 1 || !interior) continue;
    ++seen;
    EXPECT_EQ(count(t) - count(res.mask), 81u) << seed;
  }
  EXPECT_EQ(seen, 10);
}

TEST(Rcap, IdentityTransformWithoutComplementIsNoOp) {
  const auto t = rect_mask(60, 60, 10, 15, 30, 20);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto res = rcap_traced(t, RcapConfig{11, 1, seed, false});
    const auto& win = res.windows.at(0);
    if (win.direction == 1 && win.flag == 0) {
      EXPECT_EQ(res.mask, t);
    }
  }
}

TEST(Rcap, SeedLiesOnForeground) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto m = random_mask(rng, 30, 30, 0.05);
    const auto res = rcap_traced(m, RcapConfig{7, 1, static_cast<std::uint64_t>(t), false});
    if (count(m) == 0) continue;
    ASSERT_EQ(res.windows.size(), 1u);
    EXPECT_TRUE(m.at(res.windows[0].center_row, res.windows[0].center_col));
  }
}

TEST(RcapProperties, LocalityHammingAndDeterminism) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> side(20, 90), wdist(1, 40), kdist(1, 4);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  for (int t = 0; t < 200; ++t) {
    const int width = side(rng), height = side(rng);
    const auto m = random_mask(rng, width, height, density(rng));
    const RcapConfig cfg{wdist(rng), kdist(rng), rng(), (t % 4) == 3};
    const auto res = rcap_traced(m, cfg);

    EXPECT_LE(hamming(m, res.mask), static_cast<std::size_t>(cfg.kappa) * cfg.w * cfg.w) << t;
    EXPECT_LE(res.windows.size(), static_cast<std::size_t>(cfg.kappa));
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (m.at(r, c) != res.mask.at(r, c)) {
          EXPECT_TRUE(inside_some_window(res.windows, cfg.w, r, c)) << t;
        }

    const auto again = rcap_traced(m, cfg);
    EXPECT_EQ(again.mask, res.mask);
    EXPECT_EQ(again.windows.size(), res.windows.size());
  }
}

TEST(RcapProperties, DifferentSeedsDiffer) {
  const auto t = rect_mask(100, 100, 20, 20, 40, 60);
  int differing = 0;
  const auto ref = rcap(t, RcapConfig{30, 2, 0, false});
  for (std::uint64_t s = 1; s <= 20; ++s) differing += rcap(t, RcapConfig{30, 2, s, false}) != ref;
  EXPECT_GE(differing, 15);
}

TEST(RcapProperties, MeanOverlapIsNonIncreasingInKappa) {
  // Foreground area 9000 >= 4 * 40^2.
  const auto t = mask_or(rect_mask(200, 200, 40, 30, 60, 100), rect_mask(200, 200, 120, 60, 40, 75));
  ASSERT_GE(count(t), 4u * 40 * 40);
  double prev = 1.0;
  for (int kappa = 1; kappa <= 4; ++kappa) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) sum += iou(t, rcap(t, RcapConfig{40, kappa, seed * 7919 + 1, false}));
    const double mean = sum / 200.0;
    EXPECT_LE(mean, prev) << kappa;
    prev = mean;
  }
  EXPECT_LT(prev, 0.95);
}

TEST(Dihedral, MatchesRotationsAndFlips) {
  std::mt19937_64 rng(5);
  for (int n : {1, 2, 5, 8}) {
    const auto m = random_mask(rng, n, n, 0.5);
    BinaryMask expected = m;
    for (int d = 1; d <= 4; ++d) {
      EXPECT_EQ(dihedral_transform(m, d), expected) << n << " " << d;
      EXPECT_EQ(dihedral_transform(m, d + 4), hflip(expected)) << n << " " << d;
      expected = rot90(expected);
    }
  }
}

TEST(Dihedral, GroupStructure) {
  std::mt19937_64 rng(6);
  const auto m = random_mask(rng, 7, 7, 0.5);
  // Eight distinct images for an asymmetric pattern; flips are involutions; four quarter turns are the identity.
  std::vector<BinaryMask> images;
  for (int d = 1; d <= 8; ++d) {
    const auto x = dihedral_transform(m, d);
    for (const auto& y : images) EXPECT_NE(x, y) << d;
    images.push_back(x);
    EXPECT_EQ(count(x), count(m));
  }
  for (int d = 5; d <= 8; ++d) EXPECT_EQ(dihedral_transform(dihedral_transform(m, d), d), m);
  auto x = m;
  for (int k = 0; k < 4; ++k) x = dihedral_transform(x, 2);
  EXPECT_EQ(x, m);
  EXPECT_THROW(dihedral_transform(m, 0), Error);
  EXPECT_THROW(dihedral_transform(m, 9), Error);
  EXPECT_THROW(dihedral_transform(BinaryMask(3, 4), 1), Error);
}
