#include "fslqa/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace fslqa {

namespace {

cv::Mat read_raw(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("missing file: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw Error("cannot decode image: " + path.string());
  return m;
}

void write_raw(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Fixed compression settings keep output files byte-stable.
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), m, params)) throw Error("cannot write image: " + path.string());
}

}  // namespace

GrayImage read_gray_png(const std::filesystem::path& path) {
  const cv::Mat m = read_raw(path);
  double scale = 0.0;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw Error("unsupported bit depth: " + path.string());
  }
  GrayImage img(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      const double v = m.depth() == CV_8U ? m.at<std::uint8_t>(r, c) : m.at<std::uint16_t>(r, c);
      img.at(r, c) = v * scale;
    }
  }
  return img;
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  const GrayImage g = read_gray_png(path);
  return threshold_above(g, 0.5 - 1e-12);
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      m.at<std::uint8_t>(r, c) =
          static_cast<std::uint8_t>(std::lround(std::clamp(img.at(r, c), 0.0, 1.0) * 255.0));
  write_raw(path, m);
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) m.at<std::uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
  write_raw(path, m);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw Error("rgb image size mismatch");
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const auto& px = img.pixels[static_cast<std::size_t>(r) * img.width + c];
      m.at<cv::Vec3b>(r, c) = cv::Vec3b{px[2], px[1], px[0]};  // OpenCV stores BGR
    }
  }
  write_raw(path, m);
}

}  // namespace fslqa
