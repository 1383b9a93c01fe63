#include "fslqa/metrics.hpp"

#include <limits>
#include <vector>

#include "fslqa/json_util.hpp"

namespace fslqa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double ratio_or_one(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

}  // namespace

double iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double Confusion::dc() const {
  return ratio_or_one(2.0 * tp, 2.0 * tp + static_cast<double>(fp + fn));
}
double Confusion::iou() const {
  return ratio_or_one(static_cast<double>(tp), static_cast<double>(tp + fp + fn));
}
double Confusion::sen() const {
  return ratio_or_one(static_cast<double>(tp), static_cast<double>(tp + fn));
}
double Confusion::spec() const {
  return ratio_or_one(static_cast<double>(tn), static_cast<double>(tn + fp));
}
double Confusion::acc() const {
  if (total() == 0) throw Error("accuracy undefined on an empty evaluation region");
  return static_cast<double>(tp + tn) / static_cast<double>(total());
}

Confusion confusion(const BinaryMask& pred, const BinaryMask& target, const BinaryMask& roi) {
  require_same_shape(pred, target, "confusion");
  require_same_shape(pred, roi, "confusion");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!roi[i]) continue;
    const bool p = pred[i] != 0, t = target[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  if (c.total() == 0) throw Error("confusion: empty region of interest");
  return c;
}

double dc_loss(const GrayImage& pred_prob, const BinaryMask& target) {
  require_same_shape(pred_prob, target, "dc_loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = pred_prob[i];
    const double y = target[i] ? 1.0 : 0.0;
    loss += 1.0 - 2.0 * p * y / (p + y + 1.0);
  }
  return loss;
}

double variance_over_mean(std::span<const double> values) {
  if (values.empty()) return kInf;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (mean == 0.0) return kInf;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return var / mean;
}

double proposal_dispersion(const RegionalProposals& rps) {
  const std::array<double, 3> pairs{iou(rps[0], rps[1]), iou(rps[0], rps[2]), iou(rps[1], rps[2])};
  return variance_over_mean(pairs);
}

OverlapReport overlap_report(const RegionalProposals& rps, const BinaryMask& t1,
                             const BinaryMask& t2, const GrayImage& img) {
  rps.validate();
  require_same_shape(rps[0], t1, "overlap_report");
  require_same_shape(rps[0], t2, "overlap_report");
  require_same_shape(rps[0], img, "overlap_report");

  OverlapReport r;
  r.iou_pairwise = {iou(rps[0], rps[1]), iou(rps[0], rps[2]), iou(rps[1], rps[2])};
  r.phi_pi = variance_over_mean(r.iou_pairwise);

  const BinaryMask any_rp = mask_or(mask_or(rps[0], rps[1]), rps[2]);
  const std::array<const BinaryMask*, 2> labels{&t1, &t2};
  std::vector<double> intensities;
  for (int j = 0; j < 2; ++j) {
    double sum = 0.0;
    int best = 0;
    for (int i = 0; i < 3; ++i) {
      r.iou_label[j][i] = iou(rps[i], *labels[j]);
      sum += r.iou_label[j][i];
      if (r.iou_label[j][i] > r.iou_label[j][best]) best = i;
    }
    r.mu_iou[j] = sum / 3.0;
    r.psi_star[j] = best + 1;

    intensities.clear();
    for (std::size_t k = 0; k < img.size(); ++k) {
      const double v = (*labels[j])[k] && any_rp[k] ? img[k] : 0.0;
      if (v > 0.0) intensities.push_back(v);
    }
    r.phi[j] = variance_over_mean(intensities);
  }
  return r;
}

nlohmann::json to_json(const OverlapReport& r) {
  nlohmann::json pairwise = nlohmann::json::array();
  for (double v : r.iou_pairwise) pairwise.push_back(real_to_json(v));
  nlohmann::json by_label = nlohmann::json::array();
  for (const auto& row : r.iou_label) {
    nlohmann::json vals = nlohmann::json::array();
    for (double v : row) vals.push_back(real_to_json(v));
    by_label.push_back(vals);
  }
  return {{"iou_pairwise", pairwise},
          {"phi_pi", real_to_json(r.phi_pi)},
          {"iou_label", by_label},
          {"mu_iou", {real_to_json(r.mu_iou[0]), real_to_json(r.mu_iou[1])}},
          {"psi_star", {r.psi_star[0], r.psi_star[1]}},
          {"phi", {real_to_json(r.phi[0]), real_to_json(r.phi[1])}}};
}

}  // namespace fslqa
