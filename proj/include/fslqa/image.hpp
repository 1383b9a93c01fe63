#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fslqa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major 2-D raster.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_{width}, height_{height},
        pixels_(static_cast<std::size_t>(checked(width) * checked(height)), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  T& at(int row, int col) { return pixels_[index(row, col)]; }
  const T& at(int row, int col) const { return pixels_[index(row, col)]; }

  T& operator[](std::size_t i) { return pixels_[i]; }
  const T& operator[](std::size_t i) const { return pixels_[i]; }

  std::span<T> pixels() { return pixels_; }
  std::span<const T> pixels() const { return pixels_; }

  bool contains(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }

  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static long long checked(int v) {
    if (v < 0) throw Error("raster dimension must be non-negative");
    return v;
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

// Intensities in [0,1].
using GrayImage = Raster<double>;
// 0 = background, 1 = foreground.
using BinaryMask = Raster<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Raster<A>& a, const Raster<B>& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw Error(what + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                std::to_string(b.height()) + ")");
  }
}

std::size_t count(const BinaryMask& m);
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_not(const BinaryMask& a);
// Pointwise product with a mask.
GrayImage apply_mask(const GrayImage& img, const BinaryMask& m);
BinaryMask threshold_above(const GrayImage& img, double threshold);
GrayImage to_gray(const BinaryMask& m);

}  // namespace fslqa
