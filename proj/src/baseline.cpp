#include "fslqa/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "fslqa/morphology.hpp"

namespace fslqa {

double grid_threshold(int k) { return static_cast<double>(k) / kThresholdSteps; }

std::vector<RocPoint> threshold_roc(std::span<const ScoredPixels> inputs) {
  // Histogram of responses by the number of grid thresholds they exceed.
  std::vector<std::uint64_t> pos(kThresholdSteps + 2, 0), neg(kThresholdSteps + 2, 0);
  std::uint64_t total_pos = 0, total_neg = 0;
  for (const auto& in : inputs) {
    require_same_shape(in.response, in.target, "threshold_roc");
    require_same_shape(in.response, in.roi, "threshold_roc");
    for (std::size_t i = 0; i < in.response.size(); ++i) {
      if (!in.roi[i]) continue;
      int exceeded = 0;
      while (exceeded <= kThresholdSteps && in.response[i] > grid_threshold(exceeded)) ++exceeded;
      if (in.target[i]) {
        ++pos[exceeded];
        ++total_pos;
      } else {
        ++neg[exceeded];
        ++total_neg;
      }
    }
  }
  if (total_pos == 0) throw Error("ROC undefined: no positive target pixels inside the ROI");

  std::vector<RocPoint> roc;
  for (int k = 0; k <= kThresholdSteps; ++k) {
    // Pixels with response > threshold k are those that exceeded at least k+1 thresholds.
    std::uint64_t tp = 0, fp = 0;
    for (int e = k + 1; e <= kThresholdSteps + 1; ++e) {
      tp += pos[e];
      fp += neg[e];
    }
    roc.push_back({total_neg == 0 ? 0.0 : static_cast<double>(fp) / total_neg,
                   static_cast<double>(tp) / total_pos, grid_threshold(k)});
  }
  return roc;
}

double roc_auc(std::span<const RocPoint> roc) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 1.0}};
  for (const auto& p : roc) pts.emplace_back(p.fpr, p.tpr);
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  return area;
}

std::size_t operating_point(std::span<const RocPoint> roc) {
  if (roc.empty()) throw Error("operating_point: empty ROC");
  std::size_t best = 0;
  double best_dist = std::hypot(roc[0].fpr, 1.0 - roc[0].tpr);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    const double d = std::hypot(roc[i].fpr, 1.0 - roc[i].tpr);
    const bool lower_threshold = roc[i].threshold < roc[best].threshold;
    if (d < best_dist - 1e-12 || (std::abs(d - best_dist) <= 1e-12 && lower_threshold)) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

BaselineModel fit_baseline(std::span<const BaselineSample> train) {
  if (train.empty()) throw Error("fit_baseline: no training samples");
  for (const auto& s : train) require_same_shape(s.planes.denoised, s.target, "fit_baseline");

  // Running max of closing residuals, extended one radius at a time as s_d grows.
  std::vector<GrayImage> running;
  for (const auto& s : train) running.emplace_back(s.planes.denoised.width(), s.planes.denoised.height(), 0.0);
  int next_radius = 2;

  BaselineModel best;
  bool have_best = false;
  for (int s_d = kBaselineMinSd; s_d <= kBaselineMaxSd; s_d += 2) {
    for (; next_radius <= s_d; next_radius += 2) {
      for (std::size_t t = 0; t < train.size(); ++t) {
        const GrayImage& img = train[t].planes.denoised;
        const GrayImage closed = close_disk(img, next_radius);
        for (std::size_t i = 0; i < img.size(); ++i)
          running[t][i] = std::max(running[t][i], closed[i] - img[i]);
      }
    }
    std::vector<GrayImage> stretched;
    stretched.reserve(train.size());
    std::vector<ScoredPixels> scored;
    for (std::size_t t = 0; t < train.size(); ++t) {
      stretched.push_back(stretch_to_unit(running[t]));
    }
    for (std::size_t t = 0; t < train.size(); ++t)
      scored.push_back({stretched[t], train[t].target, train[t].planes.roi});

    std::vector<RocPoint> roc = threshold_roc(scored);
    const double auc = roc_auc(roc);
    if (!have_best || auc > best.auc + 1e-12) {
      best.s_d = s_d;
      best.auc = auc;
      best.theta = roc[operating_point(roc)].threshold;
      best.roc = std::move(roc);
      have_best = true;
    }
  }
  return best;
}

RegionalProposals predict_baseline(const BaselineModel& model, const PreprocessedPlanes& planes) {
  const GrayImage ib = bottom_hat(planes.denoised, BottomHatParams{model.s_d});
  const std::array<double, 3> thresholds{std::clamp(model.theta - kProposalOffset, 0.0, 1.0),
                                         std::clamp(model.theta, 0.0, 1.0),
                                         std::clamp(model.theta + kProposalOffset, 0.0, 1.0)};
  RegionalProposals out;
  for (int i = 0; i < 3; ++i) out[i] = mask_and(threshold_above(ib, thresholds[i]), planes.roi);
  return out;
}

nlohmann::json to_json(const BaselineModel& m) {
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : m.roc) roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
  return {{"s_d", m.s_d}, {"theta", m.theta}, {"auc", m.auc}, {"roc", roc}};
}

BaselineModel baseline_from_json(const nlohmann::json& j) {
  try {
    BaselineModel m;
    m.s_d = j.at("s_d").get<int>();
    m.theta = j.at("theta").get<double>();
    m.auc = j.at("auc").get<double>();
    for (const auto& p : j.at("roc"))
      m.roc.push_back({p.at("fpr").get<double>(), p.at("tpr").get<double>(), p.at("threshold").get<double>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed baseline model: ") + e.what());
  }
}

}  // namespace fslqa
