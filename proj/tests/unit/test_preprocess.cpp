#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fslqa/morphology.hpp"
#include "fslqa/preprocess.hpp"
#include "test_support.hpp"

using namespace fslqa;

namespace {

double px(const GrayImage& img, int r, int c) {
  r = std::clamp(r, 0, img.height() - 1);
  c = std::clamp(c, 0, img.width() - 1);
  return img.at(r, c);
}

// Textbook 3x3 kernel correlation with replicated borders.
double correlate(const GrayImage& img, int r, int c, const double k[3][3]) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += k[i][j] * px(img, r + i - 1, c + j - 1);
  return s;
}

// Band image: dark above row `top`, bright between, dark from `bottom` on.
GrayImage band(int w, int h, int top, int bottom) {
  GrayImage img(w, h, 0.1);
  for (int r = top; r < bottom; ++r)
    for (int c = 0; c < w; ++c) img.at(r, c) = 0.8;
  return img;
}

}  // namespace

TEST(Preprocess, Median3x3RemovesImpulse) {
  GrayImage img(7, 7, 0.25);
  img.at(3, 3) = 1.0;
  const auto m = median3x3(img);
  for (double v : m.pixels()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Preprocess, BilinearMatchesReferenceFormula) {
  std::mt19937_64 rng(2);
  const auto img = fslqa::testing::random_image(rng, 7, 5);
  const auto out = resize_bilinear(img, 11, 13);
  for (int r = 0; r < 13; ++r) {
    for (int c = 0; c < 11; ++c) {
      // Half-pixel-centred source coordinate, clamped.
      const double y = std::clamp((r + 0.5) * 5.0 / 13 - 0.5, 0.0, 4.0);
      const double x = std::clamp((c + 0.5) * 7.0 / 11 - 0.5, 0.0, 6.0);
      const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
      const int y1 = std::min(y0 + 1, 4), x1 = std::min(x0 + 1, 6);
      const double fy = y - y0, fx = x - x0;
      const double ref = img.at(y0, x0) * (1 - fy) * (1 - fx) + img.at(y0, x1) * (1 - fy) * fx +
                         img.at(y1, x0) * fy * (1 - fx) + img.at(y1, x1) * fy * fx;
      EXPECT_NEAR(out.at(r, c), ref, 1e-12);
    }
  }
}

TEST(Preprocess, BilinearIdentityAndConstant) {
  std::mt19937_64 rng(3);
  const auto img = fslqa::testing::random_image(rng, 6, 6);
  EXPECT_EQ(resize_bilinear(img, 6, 6), img);
  const auto c = resize_bilinear(GrayImage(4, 9, 0.3), 17, 5);
  for (double v : c.pixels()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Preprocess, DenoiseAndResizeClampsAndSizes) {
  std::mt19937_64 rng(4);
  const auto out = denoise_and_resize(fslqa::testing::random_image(rng, 40, 30), 300);
  EXPECT_EQ(out.width(), 300);
  EXPECT_EQ(out.height(), 300);
  for (double v : out.pixels()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Preprocess, SobelMatchesHandConvolution) {
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  std::mt19937_64 rng(5);
  const auto img = fslqa::testing::random_image(rng, 9, 8);
  const auto g = gradients(img);
  const auto gy = sobel_vertical(img);
  double max_mag = 0.0;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 9; ++c) max_mag = std::max(max_mag, std::hypot(correlate(img, r, c, kx), correlate(img, r, c, ky)));
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 9; ++c) {
      const double ex = correlate(img, r, c, kx), ey = correlate(img, r, c, ky);
      EXPECT_NEAR(gy.at(r, c), ey, 1e-12);
      EXPECT_NEAR(g.grad_mag.at(r, c), std::hypot(ex, ey) / max_mag, 1e-12);
      EXPECT_NEAR(g.grad_dir.at(r, c), (std::atan2(ey, ex) + std::numbers::pi) / (2 * std::numbers::pi), 1e-12);
    }
  }
}

TEST(Preprocess, FlatImageHasMidDirectionAndZeroMagnitude) {
  const auto g = gradients(GrayImage(5, 5, 0.4));
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(g.grad_mag[i], 0.0);
    EXPECT_DOUBLE_EQ(g.grad_dir[i], 0.5);
  }
}

TEST(Preprocess, StretchToUnit) {
  GrayImage g(3, 1);
  g[0] = 2.0;
  g[1] = 3.0;
  g[2] = 4.0;
  const auto s = stretch_to_unit(g);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_DOUBLE_EQ(s[2], 1.0);
  const auto flat = stretch_to_unit(GrayImage(4, 4, 0.7));
  for (double v : flat.pixels()) EXPECT_EQ(v, 0.0);
}

TEST(Preprocess, BottomHatIsMaxOfClosingResiduals) {
  std::mt19937_64 rng(6);
  const auto img = fslqa::testing::random_image(rng, 25, 25);
  const auto resp = bottom_hat_response(img, BottomHatParams{6});
  const auto c2 = close_disk(img, 2), c4 = close_disk(img, 4), c6 = close_disk(img, 6);
  for (std::size_t i = 0; i < img.size(); ++i)
    EXPECT_DOUBLE_EQ(resp[i], std::max({c2[i] - img[i], c4[i] - img[i], c6[i] - img[i], 0.0}));
}

TEST(Preprocess, BottomHatHighlightsDarkHole) {
  GrayImage img(41, 41, 0.8);
  for (int r = 17; r <= 23; ++r)
    for (int c = 17; c <= 23; ++c) img.at(r, c) = 0.1;
  const auto bh = bottom_hat(img, BottomHatParams{8});
  EXPECT_DOUBLE_EQ(bh.at(20, 20), 1.0);
  EXPECT_DOUBLE_EQ(bh.at(2, 2), 0.0);
}

TEST(Preprocess, RoiLiesStrictlyBetweenBandEdges) {
  const auto img = band(60, 80, 20, 55);
  const auto roi = roi_mask(img);
  for (int c = 0; c < 60; ++c) {
    EXPECT_EQ(roi.at(5, c), 0);
    EXPECT_EQ(roi.at(37, c), 1);
    EXPECT_EQ(roi.at(70, c), 0);
  }
  // The edge rows themselves are boundaries, not interior.
  int first = -1;
  for (int r = 0; r < 80 && first < 0; ++r)
    if (roi.at(r, 30)) first = r;
  EXPECT_GE(first, 19);
  EXPECT_LE(first, 21);
}

TEST(Preprocess, RoiOfFlatImageIsEmpty) { EXPECT_EQ(count(roi_mask(GrayImage(30, 30, 0.5))), 0u); }

TEST(Preprocess, PlanesAreMaskedByRoi) {
  const auto p = preprocess(band(120, 100, 30, 70), BottomHatParams{6}, 100);
  for (std::size_t i = 0; i < p.roi.size(); ++i) {
    if (p.roi[i]) continue;
    EXPECT_EQ(p.base[i], 0.0);
    EXPECT_EQ(p.bottom_hat[i], 0.0);
    EXPECT_EQ(p.grad_mag[i], 0.0);
    EXPECT_EQ(p.grad_dir[i], 0.0);
  }
  EXPECT_EQ(p.denoised.width(), 100);
  EXPECT_GT(count(p.roi), 0u);
}
