#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fslqa/dataset.hpp"

namespace fslqa {

struct AnnotatorBias {
  int dilate_px = 0;
  // Connected components with fewer pixels than this are left unannotated.
  int miss_small_below_px = 0;
};

struct SynthConfig {
  int num_images = 40;
  int image_size = 300;
  std::pair<int, int> cyst_count_range{2, 5};
  std::pair<double, double> cyst_radius_range{5.0, 12.0};
  double speckle_sigma = 0.15;
  AnnotatorBias g1;
  AnnotatorBias g2;
  std::uint64_t rng_seed = 1;
  std::string stack_id = "synthetic";

  void validate() const;
};

struct SyntheticStack {
  std::vector<ImageRecord> records;
  std::vector<BinaryMask> ground_truth;  // parallel to records
};

// Bright retina-like band on a dark field with dark elliptical cysts that
// drift slowly from one image to the next; clamped multiplicative speckle.
SyntheticStack generate_synthetic_stack(const SynthConfig& cfg);

// Dataset layout plus `<id>.GT.png`.
void write_synthetic_stack(const std::filesystem::path& dir, const SyntheticStack& stack);

}  // namespace fslqa
