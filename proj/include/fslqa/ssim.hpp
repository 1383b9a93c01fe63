#pragma once

#include <Eigen/Dense>

namespace fslqa {

struct SsimParams {
  int window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over all window x window positions (stride 1, uniform weights,
// sample covariance). Inputs smaller than the window use a single window.
double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimParams& p = {});

}  // namespace fslqa
