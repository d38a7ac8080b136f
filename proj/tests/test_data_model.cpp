#include <gtest/gtest.h>

#include <cmath>

#include "gansfer/data_model.hpp"
#include "gansfer/errors.hpp"
#include "gansfer/rng.hpp"

using namespace gansfer;
using namespace gansfer::data;

namespace {

Volume line_volume(std::vector<float> values) {
  Volume v(static_cast<int>(values.size()), 1, 1);
  for (std::size_t i = 0; i < values.size(); ++i) v[i] = values[i];
  return v;
}

}  // namespace

TEST(NormalizeIntensity, HandComputedThreeValues) {
  auto v = line_volume({1, 2, 3, 0});
  MaskVolume bg(4, 1, 1);
  bg[3] = 1;
  const auto out = normalize_intensity(v, bg);
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(out[0], -1.0 / s, 1e-6);
  EXPECT_NEAR(out[1], 0.0, 1e-6);
  EXPECT_NEAR(out[2], 1.0 / s, 1e-6);
  EXPECT_EQ(out[3], kBackgroundValue);
  EXPECT_NEAR(out[2], 1.2247, 1e-4);
}

TEST(NormalizeIntensity, ConstantForegroundThrows) {
  auto v = line_volume({5, 5, 5});
  EXPECT_THROW(normalize_intensity(v, MaskVolume(3, 1, 1)), ZeroVariance);
}

TEST(NormalizeIntensity, ShapeMismatchThrows) {
  auto v = line_volume({1, 2, 3});
  EXPECT_THROW(normalize_intensity(v, MaskVolume(2, 1, 1)), ShapeMismatch);
}

TEST(NormalizeIntensity, IdempotentAndStandardized) {
  Rng rng(5);
  Volume v(9, 8, 7);
  MaskVolume bg(9, 8, 7);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(rng.normal(3.0, 2.0));
    bg[i] = rng.bernoulli(0.2);
  }
  const auto once = normalize_intensity(v, bg);
  double s = 0, s2 = 0;
  int n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!bg[i]) {
      s += once[i];
      s2 += static_cast<double>(once[i]) * once[i];
      ++n;
    }
  EXPECT_NEAR(s / n, 0.0, 1e-6);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0, 1e-6);
  const auto twice = normalize_intensity(once, bg);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(twice[i], once[i], 1e-6);
}

TEST(ExtractRoi, PaperScaleShape) {
  Volume v(181, 217, 181);
  const auto roi = extract_roi(v, RoiBox::paper_scale(50, 60, 40));
  EXPECT_EQ(roi.nx(), 80);
  EXPECT_EQ(roi.ny(), 80);
  EXPECT_EQ(roi.nz(), 60);
}

TEST(ExtractRoi, FullExtentIsIdentity) {
  Volume v(4, 3, 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  EXPECT_EQ(extract_roi(v, RoiBox{0, 0, 0, 4, 3, 2}), v);
}

TEST(ExtractRoi, OffsetShiftsByOneVoxel) {
  Volume v(6, 5, 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  const auto a = extract_roi(v, RoiBox{0, 1, 1, 4, 3, 2});
  const auto b = extract_roi(v, RoiBox{1, 1, 1, 4, 3, 2});
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) EXPECT_EQ(b(x, y, z), a(x + 1, y, z));
}

TEST(ExtractRoi, OutOfBoundsThrows) {
  Volume v(10, 10, 10);
  EXPECT_THROW(extract_roi(v, RoiBox{5, 0, 0, 6, 2, 2}), OutOfBounds);
  EXPECT_THROW(extract_roi(v, RoiBox{-1, 0, 0, 2, 2, 2}), OutOfBounds);
}

TEST(SliceAxial, CountsAndRoundTrip) {
  Volume v(80, 80, 60);
  Rng rng(2);
  for (auto& x : v.values()) x = static_cast<float>(rng.uniform());
  const auto slices = slice_axial(v);
  ASSERT_EQ(slices.size(), 60u);
  EXPECT_EQ(slices[7].index, 7);
  EXPECT_EQ(slices[7].plane.width(), 80);
  EXPECT_EQ(restack(slices), v);
}

TEST(SliceAxial, DepthOne) {
  Volume v(3, 3, 1, 2.5f);
  const auto slices = slice_axial(v);
  ASSERT_EQ(slices.size(), 1u);
  EXPECT_EQ(slices[0].plane, v.plane(0));
}

TEST(EstimateWm, UniformSlice) {
  Image img(8, 8, 0.7f);
  Mask fg(8, 8, 1);
  EXPECT_NEAR(estimate_wm_intensity(img, fg), 0.7, 1e-6);
}

TEST(EstimateWm, BimodalPicksBrightMode) {
  Image img(10, 10);
  Mask fg(10, 10, 1);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) img(x, y) = y < 5 ? 0.2f : 0.8f;
  EXPECT_NEAR(estimate_wm_intensity(img, fg), 0.8, 1e-6);
}

TEST(EstimateWm, NoisyWmRecovered) {
  Rng rng(9);
  Image img(32, 32);
  Mask fg(32, 32, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      img(x, y) = static_cast<float>((x < 12 ? 0.45 : 0.8) + rng.normal(0.0, 0.02));
  EXPECT_NEAR(estimate_wm_intensity(img, fg), 0.8, 0.02);
}

TEST(EstimateWm, EmptyForegroundThrows) {
  EXPECT_THROW(estimate_wm_intensity(Image(4, 4), Mask(4, 4)), EmptyForeground);
}

TEST(PreprocessSeg, DarkStructureFlipped) {
  Image mr(2, 1);
  mr(0, 0) = 0.2f;
  mr(1, 0) = 0.3f;
  StructureMasks2 labels;
  for (auto& m : labels) m = Mask(2, 1);
  labels[0](0, 0) = labels[0](1, 0) = 1;
  const auto ch = preprocess_seg_channels(mr, labels, 0.6);
  EXPECT_NEAR(ch[0](0, 0), 0.4, 1e-6);
  EXPECT_NEAR(ch[0](1, 0), 0.3, 1e-6);
  for (int c = 1; c < kNumStructures; ++c)
    for (auto v : ch[c].values()) EXPECT_EQ(v, 0.0f);
}

TEST(PreprocessSeg, BrightStructureKept) {
  Image mr(2, 1);
  mr(0, 0) = 0.9f;
  mr(1, 0) = 1.0f;
  StructureMasks2 labels;
  for (auto& m : labels) m = Mask(2, 1);
  labels[3](0, 0) = labels[3](1, 0) = 1;
  const auto ch = preprocess_seg_channels(mr, labels, 0.6);
  EXPECT_NEAR(ch[3](0, 0), 0.3, 1e-6);
  EXPECT_NEAR(ch[3](1, 0), 0.4, 1e-6);
}

TEST(PreprocessSeg, ZeroOutsideMaskProperty) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Image mr(6, 6);
    for (auto& v : mr.values()) v = static_cast<float>(rng.normal());
    StructureMasks2 labels;
    for (auto& m : labels) m = Mask(6, 6);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const auto c = rng.below(kNumStructures + 1);
        if (c > 0) labels[c - 1](x, y) = 1;
      }
    const auto ch = preprocess_seg_channels(mr, labels, rng.normal());
    for (int c = 0; c < kNumStructures; ++c) {
      double sum = 0;
      for (std::size_t i = 0; i < mr.size(); ++i) {
        if (!labels[c][i]) EXPECT_EQ(ch[c][i], 0.0f);
        sum += ch[c][i];
      }
      EXPECT_GE(sum, 0.0);
    }
  }
}

TEST(LabelMap, RoundTrip) {
  StructureMasks2 labels;
  for (auto& m : labels) m = Mask(4, 4);
  labels[2](1, 1) = 1;
  labels[6](3, 0) = 1;
  const auto map = to_label_map(labels);
  EXPECT_EQ(map(1, 1), 3);
  EXPECT_EQ(map(3, 0), 7);
  EXPECT_EQ(map(0, 0), 0);
  EXPECT_EQ(from_label_map(map), labels);
}

TEST(LabelledSample, OverlapRejected) {
  LabelledSample s;
  s.mr = Volume(3, 3, 2);
  for (auto& m : s.labels) m = MaskVolume(3, 3, 2);
  s.validate();
  s.labels[0](1, 1, 1) = 1;
  s.labels[4](1, 1, 1) = 1;
  EXPECT_THROW(s.validate(), InvalidSample);
}

TEST(LabelledSample, NonBinaryAndShapeRejected) {
  LabelledSample s;
  s.mr = Volume(3, 3, 2);
  for (auto& m : s.labels) m = MaskVolume(3, 3, 2);
  s.labels[1](0, 0, 0) = 2;
  EXPECT_THROW(s.validate(), InvalidSample);
  s.labels[1] = MaskVolume(3, 3, 3);
  EXPECT_THROW(s.validate(), InvalidSample);
}

TEST(Cdr, ValuesRoundTrip) {
  for (double v : {0.0, 0.5, 1.0, 2.0, 3.0}) EXPECT_EQ(cdr_value(cdr_from_value(v)), v);
  EXPECT_THROW(cdr_from_value(1.5), InvalidSample);
}

TEST(DatasetSplit, LabelledBudgetSubset) {
  DatasetSplit split;
  for (int i = 0; i < 24; ++i) split.train_ids.push_back("s" + std::to_string(i));
  for (int i = 24; i < 30; ++i) split.test_ids.push_back("s" + std::to_string(i));
  const auto a = with_labelled_budget(split, 6, 1);
  const auto b = with_labelled_budget(split, 6, 1);
  EXPECT_EQ(a.labelled_subset, b.labelled_subset);
  ASSERT_EQ(a.labelled_subset.size(), 6u);
  for (const auto& id : a.labelled_subset)
    EXPECT_NE(std::find(split.train_ids.begin(), split.train_ids.end(), id),
              split.train_ids.end());
  EXPECT_THROW(with_labelled_budget(split, 25, 1), BadBudget);
}
