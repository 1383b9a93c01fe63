#include "fslqa/ssim.hpp"

#include <algorithm>

#include "fslqa/image.hpp"

namespace fslqa {

double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimParams& p) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("ssim: shape mismatch");
  if (a.size() == 0) throw Error("ssim: empty input");
  const Eigen::Index wr = std::min<Eigen::Index>(p.window, a.rows());
  const Eigen::Index wc = std::min<Eigen::Index>(p.window, a.cols());
  const double n = static_cast<double>(wr * wc);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const double unbias = n > 1 ? n / (n - 1) : 1.0;

  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index r = 0; r + wr <= a.rows(); ++r) {
    for (Eigen::Index c = 0; c + wc <= a.cols(); ++c) {
      const auto x = a.block(r, c, wr, wc).array();
      const auto y = b.block(r, c, wr, wc).array();
      const double mx = x.mean();
      const double my = y.mean();
      const double vx = ((x - mx).square().mean()) * unbias;
      const double vy = ((y - my).square().mean()) * unbias;
      const double cxy = ((x - mx) * (y - my)).mean() * unbias;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace fslqa
