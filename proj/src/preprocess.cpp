#include "fslqa/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "fslqa/morphology.hpp"

namespace fslqa {

namespace {

double clamped(const GrayImage& img, int r, int c) {
  r = std::clamp(r, 0, img.height() - 1);
  c = std::clamp(c, 0, img.width() - 1);
  return img.at(r, c);
}

}  // namespace

GrayImage median3x3(const GrayImage& img) {
  GrayImage out(img.width(), img.height());
  std::array<double, 9> win{};
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) win[k++] = clamped(img, r + dr, c + dc);
      std::nth_element(win.begin(), win.begin() + 4, win.end());
      out.at(r, c) = win[4];
    }
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
  if (img.empty()) throw Error("resize_bilinear: empty image");
  if (width <= 0 || height <= 0) throw Error("resize_bilinear: target size must be positive");
  if (width == img.width() && height == img.height()) return img;
  GrayImage out(width, height);
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1);
      const double bottom = (1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1);
      out.at(r, c) = (1 - wy) * top + wy * bottom;
    }
  }
  return out;
}

GrayImage denoise_and_resize(const GrayImage& img, int side) {
  if (img.empty()) throw Error("denoise_and_resize: empty image");
  GrayImage out = resize_bilinear(median3x3(img), side, side);
  for (auto& v : out.pixels()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

GrayImage bottom_hat_response(const GrayImage& img, const BottomHatParams& p) {
  if (p.s_d < 2) throw Error("bottom_hat: s_d must be >= 2");
  GrayImage out(img.width(), img.height(), 0.0);
  for (int radius = 2; radius <= p.s_d; radius += 2) {
    const GrayImage closed = close_disk(img, radius);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::max(out[i], closed[i] - img[i]);
  }
  return out;
}

GrayImage stretch_to_unit(const GrayImage& img) {
  GrayImage out(img.width(), img.height(), 0.0);
  if (img.empty()) return out;
  const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const double range = *hi - *lo;
  if (!(range > 1e-12)) return out;
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::clamp((img[i] - *lo) / range, 0.0, 1.0);
  return out;
}

GrayImage bottom_hat(const GrayImage& img, const BottomHatParams& p) {
  return stretch_to_unit(bottom_hat_response(img, p));
}

namespace {

struct Sobel {
  GrayImage gx;
  GrayImage gy;
};

Sobel sobel(const GrayImage& img) {
  Sobel s{GrayImage(img.width(), img.height()), GrayImage(img.width(), img.height())};
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const double tl = clamped(img, r - 1, c - 1), t = clamped(img, r - 1, c),
                   tr = clamped(img, r - 1, c + 1);
      const double l = clamped(img, r, c - 1), rt = clamped(img, r, c + 1);
      const double bl = clamped(img, r + 1, c - 1), b = clamped(img, r + 1, c),
                   br = clamped(img, r + 1, c + 1);
      s.gx.at(r, c) = (tr + 2 * rt + br) - (tl + 2 * l + bl);
      s.gy.at(r, c) = (bl + 2 * b + br) - (tl + 2 * t + tr);
    }
  }
  return s;
}

}  // namespace

GrayImage sobel_vertical(const GrayImage& img) { return sobel(img).gy; }

GradientPlanes gradients(const GrayImage& img) {
  const Sobel s = sobel(img);
  GradientPlanes out{GrayImage(img.width(), img.height()), GrayImage(img.width(), img.height())};
  double max_mag = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double gx = s.gx[i], gy = s.gy[i];
    out.grad_mag[i] = std::hypot(gx, gy);
    max_mag = std::max(max_mag, out.grad_mag[i]);
    const double angle = (gx == 0.0 && gy == 0.0) ? 0.0 : std::atan2(gy, gx);
    out.grad_dir[i] = std::clamp((angle + std::numbers::pi) / (2.0 * std::numbers::pi), 0.0, 1.0);
  }
  if (max_mag > 0.0)
    for (auto& v : out.grad_mag.pixels()) v /= max_mag;
  return out;
}

namespace {

std::vector<double> median_smooth(const std::vector<double>& v, int window) {
  const int n = static_cast<int>(v.size());
  const int half = window / 2;
  std::vector<double> out(v.size());
  std::vector<double> buf;
  for (int i = 0; i < n; ++i) {
    buf.assign(v.begin() + std::max(0, i - half), v.begin() + std::min(n, i + half + 1));
    std::nth_element(buf.begin(), buf.begin() + buf.size() / 2, buf.end());
    out[i] = buf[buf.size() / 2];
  }
  return out;
}

}  // namespace

BinaryMask roi_mask(const GrayImage& img) {
  const int w = img.width();
  const int h = img.height();
  BinaryMask mask(w, h);
  if (img.empty()) return mask;
  const GrayImage gy = sobel_vertical(img);

  std::vector<std::optional<std::pair<int, int>>> bounds(w);
  std::vector<double> column(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) column[r] = std::abs(gy.at(r, c));
    std::vector<double> sorted = column;
    const auto k = static_cast<std::size_t>(std::floor(0.9 * (h - 1)));
    std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
    const double p90 = sorted[k];
    int top = -1, bottom = -1;
    for (int r = 0; r < h; ++r) {
      if (column[r] > p90) {
        if (top < 0) top = r;
        bottom = r;
      }
    }
    if (top >= 0 && bottom > top) bounds[c] = std::make_pair(top, bottom);
  }

  std::vector<int> valid;
  for (int c = 0; c < w; ++c)
    if (bounds[c]) valid.push_back(c);
  if (valid.empty()) return mask;

  std::vector<double> tops(w), bottoms(w);
  for (int c = 0; c < w; ++c) {
    int src = c;
    if (!bounds[c]) {
      // nearest valid column, ties resolved to the left
      auto it = std::lower_bound(valid.begin(), valid.end(), c);
      if (it == valid.end()) {
        src = valid.back();
      } else if (it == valid.begin()) {
        src = *it;
      } else {
        const int right = *it, left = *(it - 1);
        src = (c - left <= right - c) ? left : right;
      }
    }
    tops[c] = bounds[src]->first;
    bottoms[c] = bounds[src]->second;
  }
  tops = median_smooth(tops, kRoiSmoothingWindow);
  bottoms = median_smooth(bottoms, kRoiSmoothingWindow);

  for (int c = 0; c < w; ++c) {
    for (int r = static_cast<int>(tops[c]) + 1; r < static_cast<int>(bottoms[c]); ++r) {
      if (r >= 0 && r < h) mask.at(r, c) = 1;
    }
  }
  return mask;
}

PreprocessedPlanes preprocess(const GrayImage& img, const BottomHatParams& p, int side) {
  PreprocessedPlanes out;
  out.denoised = denoise_and_resize(img, side);
  out.roi = roi_mask(out.denoised);
  out.base = apply_mask(out.denoised, out.roi);
  out.bottom_hat = apply_mask(bottom_hat(out.denoised, p), out.roi);
  GradientPlanes g = gradients(out.denoised);
  out.grad_mag = apply_mask(g.grad_mag, out.roi);
  out.grad_dir = apply_mask(g.grad_dir, out.roi);
  return out;
}

}  // namespace fslqa
