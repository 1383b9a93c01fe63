#pragma once

#include <cstdint>
#include <vector>

#include "fslqa/image.hpp"

namespace fslqa {

struct RcapConfig {
  int w = 40;      // window side, < 100
  int kappa = 1;   // iterations, 1..4
  std::uint64_t rng_seed = 0;
  // Paste at a direction-dependent offset instead of in place.
  bool offset_paste = false;

  void validate() const;
};

struct RcapWindow {
  int center_row = 0;
  int center_col = 0;
  int direction = 1;  // 1..8: rotation (d-1)%4 quarter turns, horizontal flip when d > 4
  int flag = 0;       // 1 pastes the complement
  int paste_row = 0;  // top-left of the destination window (may lie outside the image)
  int paste_col = 0;
};

struct RcapResult {
  BinaryMask mask;
  std::vector<RcapWindow> windows;
};

RcapResult rcap_traced(const BinaryMask& t, const RcapConfig& cfg);
BinaryMask rcap(const BinaryMask& t, const RcapConfig& cfg);

// Applies dihedral element `direction` (1..8) to a square window.
BinaryMask dihedral_transform(const BinaryMask& window, int direction);

}  // namespace fslqa
