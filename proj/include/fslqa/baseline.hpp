#pragma once

#include <span>
#include <vector>

#include "fslqa/preprocess.hpp"
#include "fslqa/proposals.hpp"
#include "json.hpp"

namespace fslqa {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct BaselineModel {
  int s_d = 3;
  double theta = 0.5;
  double auc = 0.0;
  std::vector<RocPoint> roc;  // ascending threshold
};

struct BaselineSample {
  const PreprocessedPlanes& planes;
  const BinaryMask& target;
};

inline constexpr int kBaselineMinSd = 3;
inline constexpr int kBaselineMaxSd = 25;
inline constexpr int kThresholdSteps = 20;  // thresholds k / 20, k = 0..20
inline constexpr double kProposalOffset = 0.05;

// Grid threshold k / kThresholdSteps.
double grid_threshold(int k);

struct ScoredPixels {
  const GrayImage& response;
  const BinaryMask& target;
  const BinaryMask& roi;
};
// Pooled pixel ROC over the threshold grid, counting only ROI pixels.
std::vector<RocPoint> threshold_roc(std::span<const ScoredPixels> inputs);
// Trapezoidal area with the (0,0) and (1,1) end points added.
double roc_auc(std::span<const RocPoint> roc);
// Index of the point closest to (fpr, tpr) = (0, 1); ties go to the lower threshold.
std::size_t operating_point(std::span<const RocPoint> roc);

BaselineModel fit_baseline(std::span<const BaselineSample> train);
RegionalProposals predict_baseline(const BaselineModel& model, const PreprocessedPlanes& planes);

nlohmann::json to_json(const BaselineModel& m);
BaselineModel baseline_from_json(const nlohmann::json& j);

}  // namespace fslqa
