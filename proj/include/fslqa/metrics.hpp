#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "fslqa/image.hpp"
#include "fslqa/proposals.hpp"
#include "json.hpp"

namespace fslqa {

// |a AND b| / |a OR b|; two empty masks agree perfectly (1.0).
double iou(const BinaryMask& a, const BinaryMask& b);

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  // 0/0 ratios count as vacuous success (1.0).
  double dc() const;
  double iou() const;
  double sen() const;
  double spec() const;
  double acc() const;
};

// Counts restricted to `roi`; throws on an empty roi.
Confusion confusion(const BinaryMask& pred, const BinaryMask& target, const BinaryMask& roi);

// sum_k (1 - 2 p y / (p + y + 1))
double dc_loss(const GrayImage& pred_prob, const BinaryMask& target);

// Population variance over mean; +INF for an empty sample or zero mean.
double variance_over_mean(std::span<const double> values);

// Variance-over-mean of the three pairwise proposal IOUs.
double proposal_dispersion(const RegionalProposals& rps);

struct OverlapReport {
  std::array<double, 3> iou_pairwise{};  // (P1,P2), (P1,P3), (P2,P3)
  double phi_pi = 0.0;
  std::array<std::array<double, 3>, 2> iou_label{};  // IOU(P_i, T_j) as [j][i]
  std::array<double, 2> mu_iou{};
  std::array<int, 2> psi_star{};  // 1-based proposal index
  std::array<double, 2> phi{};
};

OverlapReport overlap_report(const RegionalProposals& rps, const BinaryMask& t1,
                             const BinaryMask& t2, const GrayImage& img);

nlohmann::json to_json(const OverlapReport& r);

}  // namespace fslqa
