#include "fslqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "fslqa/morphology.hpp"

namespace fslqa {

void SynthConfig::validate() const {
  if (num_images < 1) throw Error("synth: num_images must be >= 1");
  if (image_size < 32) throw Error("synth: image_size must be >= 32");
  if (cyst_count_range.first < 0 || cyst_count_range.first > cyst_count_range.second)
    throw Error("synth: cyst_count_range must be a nonempty range of non-negative counts");
  if (cyst_radius_range.first <= 0.0 || cyst_radius_range.first > cyst_radius_range.second)
    throw Error("synth: cyst_radius_range must be a nonempty positive range");
  if (!(speckle_sigma >= 0.0)) throw Error("synth: speckle_sigma must be >= 0");
  for (const auto* b : {&g1, &g2}) {
    if (b->dilate_px < 0 || b->miss_small_below_px < 0)
      throw Error("synth: annotator bias values must be >= 0");
  }
}

namespace {

constexpr double kBackground = 0.08;
constexpr double kBandTop = 0.60;
constexpr double kBandBottom = 0.75;
constexpr double kCystLevel = 0.12;

struct Cyst {
  double col = 0;    // center column
  double depth = 0;  // 0..1 position between the band's usable top and bottom
  double radius = 0;
  double aspect = 1;  // vertical / horizontal radius
};

struct Band {
  double size;
  double phase_top;
  double phase_thick;

  double top(double col) const {
    return size * (0.30 + 0.04 * std::sin(2.0 * std::numbers::pi * 0.8 * col / size + phase_top));
  }
  double thickness(double col) const {
    return size * (0.34 + 0.03 * std::sin(2.0 * std::numbers::pi * 1.3 * col / size + phase_thick));
  }
};

class Generator {
 public:
  explicit Generator(const SynthConfig& cfg) : cfg_{cfg}, rng_{cfg.rng_seed} {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    band_ = Band{static_cast<double>(cfg.image_size), phase(rng_), phase(rng_)};
    std::uniform_int_distribution<int> n(cfg.cyst_count_range.first, cfg.cyst_count_range.second);
    const int count = n(rng_);
    for (int i = 0; i < count; ++i) cysts_.push_back(spawn());
  }

  // Advances the volumetric state by one slice.
  void step() {
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double size = cfg_.image_size;
    for (auto& c : cysts_) {
      if (u(rng_) < 0.08) {
        c = spawn();
        continue;
      }
      c.col = std::clamp(c.col + 0.8 * jitter(rng_), 0.1 * size, 0.9 * size);
      c.depth = std::clamp(c.depth + 0.03 * jitter(rng_), 0.0, 1.0);
      c.radius = std::clamp(c.radius + 0.4 * jitter(rng_), cfg_.cyst_radius_range.first,
                            cfg_.cyst_radius_range.second);
    }
    if (u(rng_) < 0.15) {
      const bool grow = u(rng_) < 0.5;
      const int n = static_cast<int>(cysts_.size());
      if (grow && n < cfg_.cyst_count_range.second) cysts_.push_back(spawn());
      if (!grow && n > cfg_.cyst_count_range.first) cysts_.pop_back();
    }
    band_.phase_top += 0.02;
    band_.phase_thick += 0.015;
  }

  std::pair<GrayImage, BinaryMask> render() {
    const int s = cfg_.image_size;
    GrayImage img(s, s, kBackground);
    BinaryMask gt(s, s);
    for (int c = 0; c < s; ++c) {
      const double top = band_.top(c);
      const double thick = band_.thickness(c);
      for (int r = 0; r < s; ++r) {
        const double rel = (r - top) / thick;
        if (rel >= 0.0 && rel <= 1.0) img.at(r, c) = kBandTop + (kBandBottom - kBandTop) * rel;
      }
    }
    for (const auto& cyst : cysts_) {
      const double rx = cyst.radius;
      const double ry = cyst.radius * cyst.aspect;
      const double top = band_.top(cyst.col);
      const double thick = band_.thickness(cyst.col);
      const double margin = 3.0;
      const double span = std::max(0.0, thick - 2.0 * (ry + margin));
      const double cy = top + ry + margin + cyst.depth * span;
      const int r0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
      const int r1 = std::min(s - 1, static_cast<int>(std::ceil(cy + ry)));
      const int c0 = std::max(0, static_cast<int>(std::floor(cyst.col - rx)));
      const int c1 = std::min(s - 1, static_cast<int>(std::ceil(cyst.col + rx)));
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double dx = (c - cyst.col) / rx;
          const double dy = (r - cy) / ry;
          if (dx * dx + dy * dy <= 1.0) {
            img.at(r, c) = kCystLevel;
            gt.at(r, c) = 1;
          }
        }
      }
    }
    if (cfg_.speckle_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg_.speckle_sigma);
      for (auto& v : img.pixels()) v = std::clamp(v * (1.0 + noise(rng_)), 0.0, 1.0);
    }
    return {std::move(img), std::move(gt)};
  }

 private:
  Cyst spawn() {
    std::uniform_real_distribution<double> col(0.15 * cfg_.image_size, 0.85 * cfg_.image_size);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> radius(cfg_.cyst_radius_range.first,
                                                  cfg_.cyst_radius_range.second);
    std::uniform_real_distribution<double> aspect(0.6, 1.0);
    return Cyst{col(rng_), unit(rng_), radius(rng_), aspect(rng_)};
  }

  SynthConfig cfg_;
  std::mt19937_64 rng_;
  Band band_{};
  std::vector<Cyst> cysts_;
};

BinaryMask annotate(const BinaryMask& gt, const AnnotatorBias& bias) {
  return remove_small_components(dilate_mask(gt, bias.dilate_px),
                                 static_cast<std::size_t>(bias.miss_small_below_px));
}

}  // namespace

SyntheticStack generate_synthetic_stack(const SynthConfig& cfg) {
  cfg.validate();
  Generator gen(cfg);
  SyntheticStack out;
  const int digits = std::max(3, static_cast<int>(std::to_string(cfg.num_images - 1).size()));
  for (int i = 0; i < cfg.num_images; ++i) {
    if (i > 0) gen.step();
    auto [img, gt] = gen.render();
    ImageRecord rec;
    std::string num = std::to_string(i);
    rec.id = "img" + std::string(digits - num.size(), '0') + num;
    rec.stack_id = cfg.stack_id;
    rec.index_in_stack = i;
    rec.image = std::move(img);
    rec.labels.emplace(kLabelG1, annotate(gt, cfg.g1));
    rec.labels.emplace(kLabelG2, annotate(gt, cfg.g2));
    out.records.push_back(std::move(rec));
    out.ground_truth.push_back(std::move(gt));
  }
  return out;
}

void write_synthetic_stack(const std::filesystem::path& dir, const SyntheticStack& stack) {
  std::map<std::string, std::map<std::string, BinaryMask>> extra;
  for (std::size_t i = 0; i < stack.records.size(); ++i)
    extra[stack.records[i].id].emplace("GT", stack.ground_truth[i]);
  const std::string stack_id = stack.records.empty() ? "synthetic" : stack.records.front().stack_id;
  save_stack(dir, stack_id, stack.records, extra);
}

}  // namespace fslqa
