#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "fslqa/image.hpp"

namespace fslqa {

// 8- or 16-bit grayscale; divided by the type maximum so 255 -> 1.0.
GrayImage read_gray_png(const std::filesystem::path& path);
// Foreground where the normalized value is >= 0.5 (>= 128 for 8-bit files).
BinaryMask read_mask_png(const std::filesystem::path& path);

void write_gray_png(const std::filesystem::path& path, const GrayImage& img);
// Foreground written as 255.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::array<std::uint8_t, 3>> pixels;  // row-major RGB
};
void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);

}  // namespace fslqa
