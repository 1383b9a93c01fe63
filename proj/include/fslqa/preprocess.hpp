#pragma once

#include "fslqa/image.hpp"

namespace fslqa {

inline constexpr int kWorkingSide = 300;

GrayImage median3x3(const GrayImage& img);
// Pixel-center aligned bilinear interpolation with edge clamping.
GrayImage resize_bilinear(const GrayImage& img, int width, int height);
// 3x3 median, bilinear resize to side x side, clamp to [0,1].
GrayImage denoise_and_resize(const GrayImage& img, int side = kWorkingSide);

struct BottomHatParams {
  int s_d = 16;  // largest structuring-element radius; radii 2, 4, ..., <= s_d
};

// max over r in {2,4,...,s_d} of (closing_r(img) - img), before stretching.
GrayImage bottom_hat_response(const GrayImage& img, const BottomHatParams& p);
// Linear min-max stretch to [0,1]; constant input maps to all zeros.
GrayImage stretch_to_unit(const GrayImage& img);
GrayImage bottom_hat(const GrayImage& img, const BottomHatParams& p);

struct GradientPlanes {
  GrayImage grad_mag;  // Sobel magnitude divided by its maximum
  GrayImage grad_dir;  // (atan2(gy, gx) + pi) / (2 pi)
};
GradientPlanes gradients(const GrayImage& img);
// Vertical Sobel derivative (positive when intensity increases downwards).
GrayImage sobel_vertical(const GrayImage& img);

// Region strictly between the top-most and bottom-most strong horizontal edges.
BinaryMask roi_mask(const GrayImage& img);
inline constexpr int kRoiSmoothingWindow = 15;

struct PreprocessedPlanes {
  GrayImage denoised;  // unmasked, resized source of the planes below
  GrayImage base;
  GrayImage bottom_hat;
  GrayImage grad_mag;
  GrayImage grad_dir;
  BinaryMask roi;
};

// All four planes are multiplied by the ROI.
PreprocessedPlanes preprocess(const GrayImage& img, const BottomHatParams& p = {},
                              int side = kWorkingSide);

}  // namespace fslqa
