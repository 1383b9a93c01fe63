#pragma once

#include <array>

#include "fslqa/image.hpp"

namespace fslqa {

// Ordered triple (P1, P2, P3) of regional proposals for one image.
struct RegionalProposals {
  std::array<BinaryMask, 3> p;

  const BinaryMask& operator[](std::size_t i) const { return p[i]; }
  BinaryMask& operator[](std::size_t i) { return p[i]; }

  void validate() const {
    require_same_shape(p[0], p[1], "regional proposals");
    require_same_shape(p[0], p[2], "regional proposals");
  }
  friend bool operator==(const RegionalProposals&, const RegionalProposals&) = default;
};

}  // namespace fslqa
