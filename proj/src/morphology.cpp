#include "fslqa/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fslqa {

std::vector<int> disk_half_widths(int radius) {
  if (radius < 0) throw Error("disk radius must be non-negative");
  std::vector<int> half(2 * radius + 1);
  for (int dy = -radius; dy <= radius; ++dy) {
    int h = 0;
    while ((h + 1) * (h + 1) + dy * dy <= radius * radius) ++h;
    half[dy + radius] = h;
  }
  return half;
}

namespace {

// out[i] = max(in[i-h .. i+h]) clipped to the row (van Herk / Gil-Werman).
void sliding_max(const double* in, double* out, int n, int h, std::vector<double>& scratch) {
  const double lowest = -std::numeric_limits<double>::infinity();
  const int k = 2 * h + 1;
  const int padded = n + 2 * h;
  const int total = ((padded + k - 1) / k) * k;
  scratch.assign(static_cast<std::size_t>(3 * total), lowest);
  double* src = scratch.data();
  double* prefix = src + total;
  double* suffix = prefix + total;
  std::copy(in, in + n, src + h);
  for (int b = 0; b < total; b += k) {
    prefix[b] = src[b];
    for (int i = 1; i < k; ++i) prefix[b + i] = std::max(prefix[b + i - 1], src[b + i]);
    suffix[b + k - 1] = src[b + k - 1];
    for (int i = k - 2; i >= 0; --i) suffix[b + i] = std::max(suffix[b + i + 1], src[b + i]);
  }
  for (int i = 0; i < n; ++i) out[i] = std::max(suffix[i], prefix[i + k - 1]);
}

GrayImage dilate_impl(const GrayImage& img, int radius) {
  const int w = img.width();
  const int hgt = img.height();
  const auto half = disk_half_widths(radius);

  std::map<int, GrayImage> row_max;
  std::vector<double> scratch;
  for (int h : half) {
    if (row_max.count(h)) continue;
    GrayImage m(w, hgt);
    for (int r = 0; r < hgt; ++r) sliding_max(&img.at(r, 0), &m.at(r, 0), w, h, scratch);
    row_max.emplace(h, std::move(m));
  }

  GrayImage out(w, hgt, -std::numeric_limits<double>::infinity());
  for (int dy = -radius; dy <= radius; ++dy) {
    const GrayImage& src = row_max.at(half[dy + radius]);
    for (int r = std::max(0, -dy); r < std::min(hgt, hgt - dy); ++r) {
      const double* s = &src.at(r + dy, 0);
      double* o = &out.at(r, 0);
      for (int c = 0; c < w; ++c) o[c] = std::max(o[c], s[c]);
    }
  }
  return out;
}

GrayImage negate(const GrayImage& img) {
  GrayImage out = img;
  for (auto& v : out.pixels()) v = -v;
  return out;
}

}  // namespace

GrayImage dilate_disk(const GrayImage& img, int radius) {
  if (img.empty()) return img;
  return dilate_impl(img, radius);
}

GrayImage erode_disk(const GrayImage& img, int radius) {
  if (img.empty()) return img;
  return negate(dilate_impl(negate(img), radius));
}

GrayImage close_disk(const GrayImage& img, int radius) {
  return erode_disk(dilate_disk(img, radius), radius);
}

BinaryMask dilate_mask(const BinaryMask& mask, int radius) {
  if (radius <= 0) return mask;
  return threshold_above(dilate_disk(to_gray(mask), radius), 0.5);
}

Components connected_components(const BinaryMask& mask) {
  Components out{Raster<int>(mask.width(), mask.height(), 0), {}};
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c) || out.labels.at(r, c)) continue;
      const int label = static_cast<int>(out.areas.size()) + 1;
      std::size_t area = 0;
      stack.assign(1, {r, c});
      out.labels.at(r, c) = label;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (!mask.contains(ny, nx) || !mask.at(ny, nx) || out.labels.at(ny, nx)) continue;
            out.labels.at(ny, nx) = label;
            stack.emplace_back(ny, nx);
          }
        }
      }
      out.areas.push_back(area);
    }
  }
  return out;
}

BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area) {
  if (min_area == 0) return mask;
  const Components cc = connected_components(mask);
  BinaryMask out(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int label = cc.labels[i];
    out[i] = (label > 0 && cc.areas[label - 1] >= min_area) ? 1 : 0;
  }
  return out;
}

}  // namespace fslqa
