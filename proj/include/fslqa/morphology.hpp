#pragma once

#include <vector>

#include "fslqa/image.hpp"

namespace fslqa {

// Half-widths of the discrete disk {(dx,dy): dx^2 + dy^2 <= r^2}, indexed by dy + r.
std::vector<int> disk_half_widths(int radius);

// Flat grayscale morphology with a disk; out-of-image pixels are ignored.
GrayImage dilate_disk(const GrayImage& img, int radius);
GrayImage erode_disk(const GrayImage& img, int radius);
GrayImage close_disk(const GrayImage& img, int radius);

BinaryMask dilate_mask(const BinaryMask& mask, int radius);

// 8-connected components; labels are 1..n, background 0.
struct Components {
  Raster<int> labels;
  std::vector<std::size_t> areas;  // areas[label - 1]
};
Components connected_components(const BinaryMask& mask);
BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area);

}  // namespace fslqa
