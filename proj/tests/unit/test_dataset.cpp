#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "fslqa/dataset.hpp"
#include "fslqa/metrics.hpp"
#include "fslqa/morphology.hpp"
#include "fslqa/png_io.hpp"
#include "fslqa/synth.hpp"
#include "test_support.hpp"

using namespace fslqa;
using fslqa::testing::random_mask;
using fslqa::testing::scratch_dir;

namespace fs = std::filesystem;

namespace {

std::vector<ImageRecord> dummy_records(int n) {
  std::vector<ImageRecord> out;
  for (int i = 0; i < n; ++i) {
    ImageRecord r;
    r.id = "im" + std::to_string(100 + i);
    r.index_in_stack = i;
    r.image = GrayImage(4, 4);
    r.labels.emplace(kLabelG1, BinaryMask(4, 4));
    r.labels.emplace(kLabelG2, BinaryMask(4, 4));
    out.push_back(std::move(r));
  }
  return out;
}

std::set<int> train_indices(const StackSplit& s) {
  std::set<int> out;
  for (const auto& id : s.train_ids) out.insert(std::stoi(id.substr(2)) - 100);
  return out;
}

SynthConfig small_synth() {
  SynthConfig c;
  c.num_images = 6;
  c.image_size = 120;
  return c;
}

}  // namespace

TEST(MakeSplit, ThirtySevenImages) {
  const auto s = make_split(dummy_records(37));
  EXPECT_EQ(train_indices(s), (std::set<int>{0, 1, 2, 18, 19}));
  EXPECT_EQ(s.test_ids.size(), 32u);
}

TEST(MakeSplit, FiveImagesExhaustTheStack) {
  const auto s = make_split(dummy_records(5));
  EXPECT_EQ(train_indices(s), (std::set<int>{0, 1, 2, 3, 4}));
  EXPECT_TRUE(s.test_ids.empty());
}

TEST(MakeSplit, TooFewImages) { EXPECT_THROW(make_split(dummy_records(4)), Error); }

TEST(MakeSplit, AlwaysFiveDistinctDisjointIds) {
  for (int n = 5; n <= 60; ++n) {
    const auto s = make_split(dummy_records(n));
    const std::set<std::string> train(s.train_ids.begin(), s.train_ids.end());
    EXPECT_EQ(train.size(), 5u) << n;
    EXPECT_EQ(s.train_ids.size() + s.test_ids.size(), static_cast<std::size_t>(n));
    for (const auto& id : s.test_ids) EXPECT_EQ(train.count(id), 0u) << n;
  }
}

TEST(MakeSplit, UsesStackIndexNotVectorOrder) {
  auto recs = dummy_records(10);
  std::reverse(recs.begin(), recs.end());
  EXPECT_EQ(train_indices(make_split(recs)), (std::set<int>{0, 1, 2, 5, 6}));
}

TEST(Stack, SaveLoadRoundTrip) {
  std::mt19937_64 rng(8);
  auto recs = dummy_records(3);
  for (auto& r : recs) {
    r.image = fslqa::testing::random_image(rng, 17, 11);
    // Quantize to the 8-bit file grid so the round trip is exact.
    for (auto& v : r.image.pixels()) v = std::round(v * 255.0) / 255.0;
    r.labels.at(kLabelG1) = random_mask(rng, 17, 11, 0.3);
    r.labels.at(kLabelG2) = random_mask(rng, 17, 11, 0.6);
  }
  const auto dir = scratch_dir("stack_roundtrip");
  save_stack(dir, "s1", recs);
  const auto loaded = load_stack(dir);
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].id, recs[i].id);
    EXPECT_EQ(loaded[i].stack_id, "s1");
    EXPECT_EQ(loaded[i].index_in_stack, static_cast<int>(i));
    EXPECT_EQ(loaded[i].g1(), recs[i].g1());
    EXPECT_EQ(loaded[i].g2(), recs[i].g2());
    for (std::size_t k = 0; k < recs[i].image.size(); ++k) EXPECT_NEAR(loaded[i].image[k], recs[i].image[k], 1e-12);
  }
  // Saving what was loaded reproduces the masks bit-exactly.
  const auto dir2 = scratch_dir("stack_roundtrip2");
  save_stack(dir2, "s1", loaded);
  const auto again = load_stack(dir2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(again[i].g1(), loaded[i].g1());
    EXPECT_EQ(again[i].g2(), loaded[i].g2());
  }
}

TEST(Stack, MissingLabelNamesTheId) {
  const auto dir = scratch_dir("stack_missing");
  save_stack(dir, "s", dummy_records(3));
  fs::remove(dir / "im101.G2.png");
  try {
    load_stack(dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("im101"), std::string::npos) << e.what();
  }
}

TEST(Stack, DimensionMismatch) {
  const auto dir = scratch_dir("stack_dims");
  save_stack(dir, "s", dummy_records(2));
  write_mask_png(dir / "im100.G1.png", BinaryMask(5, 4));
  EXPECT_THROW(load_stack(dir), Error);
}

TEST(Stack, IntensityEndpointsAndMaskThreshold) {
  const auto dir = scratch_dir("stack_endpoints");
  auto recs = dummy_records(1);
  recs[0].image.at(0, 0) = 1.0;
  recs[0].image.at(0, 1) = 0.0;
  save_stack(dir, "s", recs);
  GrayImage soft(4, 4, 0.0);
  soft.at(1, 1) = 128.0 / 255.0;
  soft.at(1, 2) = 127.0 / 255.0;
  write_gray_png(dir / "im100.G1.png", soft);
  const auto loaded = load_stack(dir);
  EXPECT_EQ(loaded[0].image.at(0, 0), 1.0);
  EXPECT_EQ(loaded[0].image.at(0, 1), 0.0);
  EXPECT_EQ(loaded[0].g1().at(1, 1), 1);
  EXPECT_EQ(loaded[0].g1().at(1, 2), 0);
}

TEST(Stack, OrderFollowsManifest) {
  const auto dir = scratch_dir("stack_order");
  auto recs = dummy_records(3);
  std::swap(recs[0], recs[2]);
  save_stack(dir, "s", recs);
  const auto loaded = load_stack(dir);
  EXPECT_EQ(loaded[0].id, "im102");
  EXPECT_EQ(loaded[2].id, "im100");
}

TEST(Stack, DropsImagesWithBothLabelsBlank) {
  auto recs = dummy_records(4);
  recs[1].labels.at(kLabelG1).at(0, 0) = 1;
  recs[2].labels.at(kLabelG2).at(3, 3) = 1;
  const auto res = drop_unannotated(recs);
  EXPECT_EQ(res.dropped_ids, (std::vector<std::string>{"im100", "im103"}));
  ASSERT_EQ(res.kept.size(), 2u);
  EXPECT_EQ(res.kept[0].id, "im101");
}

TEST(Synth, ZeroNoiseLabelsEqualGroundTruth) {
  auto c = small_synth();
  c.speckle_sigma = 0.0;
  const auto s = generate_synthetic_stack(c);
  ASSERT_EQ(s.records.size(), 6u);
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    EXPECT_GT(count(s.ground_truth[i]), 0u);
    EXPECT_EQ(s.records[i].g1(), s.ground_truth[i]);
    EXPECT_EQ(s.records[i].g2(), s.ground_truth[i]);
    EXPECT_EQ(iou(s.records[i].g1(), s.ground_truth[i]), 1.0);
  }
}

TEST(Synth, Deterministic) {
  const auto a = generate_synthetic_stack(small_synth());
  const auto b = generate_synthetic_stack(small_synth());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].image, b.records[i].image);
    EXPECT_EQ(a.records[i].g1(), b.records[i].g1());
    EXPECT_EQ(a.ground_truth[i], b.ground_truth[i]);
  }
  auto c = small_synth();
  c.rng_seed = 2;
  EXPECT_NE(generate_synthetic_stack(c).records[0].image, a.records[0].image);
}

TEST(Synth, AnnotatorBias) {
  auto c = small_synth();
  c.g1.dilate_px = 1;
  c.g2.miss_small_below_px = 150;
  const auto s = generate_synthetic_stack(c);
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& gt = s.ground_truth[i];
    EXPECT_GE(count(s.records[i].g1()), count(gt));
    EXPECT_EQ(mask_and(s.records[i].g1(), gt), gt);
    // Every ground-truth component with at least 150 pixels is kept whole; the rest are gone.
    const auto comps = connected_components(gt);
    BinaryMask expected(gt.width(), gt.height());
    for (std::size_t k = 0; k < gt.size(); ++k)
      if (comps.labels[k] > 0 && comps.areas[comps.labels[k] - 1] >= 150) expected[k] = 1;
    EXPECT_EQ(s.records[i].g2(), expected);
  }
}

TEST(Synth, ImagesInUnitRange) {
  const auto s = generate_synthetic_stack(small_synth());
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& img = s.records[i].image;
    for (double v : img.pixels()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synth, WrittenLayoutLoads) {
  const auto s = generate_synthetic_stack(small_synth());
  const auto dir = scratch_dir("synth_layout");
  write_synthetic_stack(dir, s);
  const auto loaded = load_stack(dir);
  ASSERT_EQ(loaded.size(), s.records.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].g1(), s.records[i].g1());
    EXPECT_EQ(read_mask_png(dir / (loaded[i].id + ".GT.png")), s.ground_truth[i]);
  }
}

TEST(Synth, InvalidConfig) {
  auto c = small_synth();
  c.speckle_sigma = -1;
  EXPECT_THROW(generate_synthetic_stack(c), Error);
  c = small_synth();
  c.cyst_radius_range = {5, 4};
  EXPECT_THROW(generate_synthetic_stack(c), Error);
}
