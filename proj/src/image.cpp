#include "fslqa/image.hpp"

#include <algorithm>

namespace fslqa {

std::size_t count(const BinaryMask& m) {
  std::size_t n = 0;
  for (auto v : m.pixels()) n += (v != 0);
  return n;
}

namespace {

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, const char* what, Op op) {
  require_same_shape(a, b, what);
  BinaryMask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i] != 0, b[i] != 0) ? 1 : 0;
  return out;
}

}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_and", [](bool x, bool y) { return x && y; });
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_or", [](bool x, bool y) { return x || y; });
}

BinaryMask mask_not(const BinaryMask& a) {
  BinaryMask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] ? 0 : 1;
  return out;
}

GrayImage apply_mask(const GrayImage& img, const BinaryMask& m) {
  require_same_shape(img, m, "apply_mask");
  GrayImage out = img;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!m[i]) out[i] = 0.0;
  return out;
}

BinaryMask threshold_above(const GrayImage& img, double threshold) {
  BinaryMask out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] > threshold ? 1 : 0;
  return out;
}

GrayImage to_gray(const BinaryMask& m) {
  GrayImage out(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace fslqa
