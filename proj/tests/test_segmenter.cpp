#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gansfer/evaluation.hpp"
#include "gansfer/phantom.hpp"
#include "gansfer/segmenter.hpp"

using namespace gansfer;
using namespace gansfer::seg;

namespace {

SegSample labelled_slice(std::uint64_t seed, int z) {
  const auto p = phantom::generate_phantom(seed, 30, data::Cdr::k0).sample;
  const auto mr = data::to_mr_slices(p.mr);
  return {mr[z], data::to_label_map(p.labels).plane(z)};
}

SegNetConfig small_cfg() {
  SegNetConfig c;
  c.steps = 10;
  c.batch = 4;
  return c;
}

}  // namespace

TEST(SegConfig, GeometryAndValidation) {
  SegNetConfig c;
  EXPECT_EQ(c.normal_input(), 17);
  EXPECT_EQ(c.context_input_down(), 11);
  EXPECT_EQ(c.context_input(), 33);
  EXPECT_NO_THROW(c.validate(32));
  c.segment = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SegNetConfig{};
  EXPECT_THROW(c.validate(16), ConfigError);
  c.downsample = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(SegNetConfig::from_json(SegNetConfig{}.to_json()).to_json(), SegNetConfig{}.to_json());
}

TEST(SegNet, OutputShape) {
  SegNetConfig c;
  SegNet net(c);
  const auto out = net->forward(torch::zeros({2, 1, 17, 17}), torch::zeros({2, 1, 33, 33}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 8, 9, 9}));
}

TEST(Sampler, RatioOneNearHalf) {
  std::vector<SegSample> real = {labelled_slice(1, 10)}, syn = {labelled_slice(2, 10)};
  MixedSampler s(real, syn, 1, 7);
  int n = 0;
  for (int i = 0; i < 30000; ++i) n += s.draw_source();
  EXPECT_NEAR(n / 30000.0, 0.5, 0.01);
}

TEST(Sampler, RatioHundred) {
  std::vector<SegSample> real = {labelled_slice(1, 10)}, syn = {labelled_slice(2, 10)};
  MixedSampler s(real, syn, 100, 8);
  EXPECT_DOUBLE_EQ(s.synthetic_probability(), 1.0 / 101.0);
  int n = 0;
  for (int i = 0; i < 100000; ++i) n += s.draw_source();
  EXPECT_NEAR(n / 100000.0, 1.0 / 101.0, 0.003);
}

TEST(Sampler, BaselineNeverDrawsSynthetic) {
  MixedSampler s({labelled_slice(1, 10)}, {}, std::nullopt, 1);
  for (int i = 0; i < 1000; ++i) EXPECT_FALSE(s.draw().synthetic);
  EXPECT_THROW(MixedSampler({}, {}, std::nullopt, 1), EmptyPool);
  EXPECT_THROW(MixedSampler({labelled_slice(1, 10)}, {}, 2, 1), EmptyPool);
}

TEST(Sampler, ForegroundCentreFraction) {
  MixedSampler s({labelled_slice(1, 10)}, {}, std::nullopt, 3, 0.5, true);
  int fg = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto d = s.draw();
    fg += d.sample.labels(d.cx, d.cy) != 0;
  }
  // 50% forced foreground plus uniform centres that land on foreground.
  EXPECT_GT(fg / static_cast<double>(n), 0.5);
  EXPECT_LT(fg / static_cast<double>(n), 0.7);
}

TEST(Sampler, FlipAppliedToImageAndLabels) {
  const auto orig = labelled_slice(1, 10);
  MixedSampler s({orig}, {}, std::nullopt, 4);
  const auto cfg = small_cfg();
  int flipped = 0;
  for (int i = 0; i < 200; ++i) {
    const auto d = s.draw();
    if (!d.flipped) {
      EXPECT_EQ(d.sample.mr, orig.mr);
      continue;
    }
    ++flipped;
    EXPECT_EQ(d.sample.mr, flip_lr(orig.mr));
    EXPECT_EQ(d.sample.labels, flip_lr(orig.labels));
    // Patch of the flipped slice equals the mirrored patch at the mirrored centre.
    const auto a = extract_patch(d.sample, d.cx, d.cy, cfg);
    const auto b = extract_patch(orig, orig.mr.width() - 1 - d.cx, d.cy, cfg);
    EXPECT_TRUE(torch::equal(a.labels, b.labels.flip({1})));
    EXPECT_TRUE(torch::equal(a.normal, b.normal.flip({2})));
  }
  EXPECT_GT(flipped, 60);
  EXPECT_LT(flipped, 140);
}

TEST(Segment, TilesCoverEveryPixelOnce) {
  for (int size : {9, 16, 32, 80}) {
    const auto o = tile_origins(size, 9);
    std::vector<int> hits(size, 0);
    for (int start : o)
      for (int i = start; i < std::min(size, start + 9); ++i) ++hits[i];
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Segment, ShapeMismatchAndLabelRange) {
  auto cfg = small_cfg();
  MixedSampler s({labelled_slice(1, 10)}, {}, std::nullopt, 1);
  const auto m = train_segnet(cfg, s);
  EXPECT_THROW(segment_slice(m, Image(16, 16, 0.0f)), ShapeMismatch);
  const auto out = segment_slice(m, labelled_slice(3, 8).mr);
  for (auto v : out.values()) EXPECT_LE(v, 7);
}

TEST(Training, SeededRerunIdenticalAndCheckpointRoundTrip) {
  auto cfg = small_cfg();
  cfg.seed = 11;
  MixedSampler a({labelled_slice(1, 10)}, {labelled_slice(2, 9)}, 2, 5);
  MixedSampler b({labelled_slice(1, 10)}, {labelled_slice(2, 9)}, 2, 5);
  const auto ma = train_segnet(cfg, a);
  const auto mb = train_segnet(cfg, b);
  EXPECT_EQ(weights_hash(ma), weights_hash(mb));

  const auto path = std::filesystem::temp_directory_path() / "gansfer_segnet.ckpt";
  ma.save(path);
  const auto back = SegModel::load(path);
  EXPECT_EQ(weights_hash(back), weights_hash(ma));
  const auto probe = labelled_slice(4, 11).mr;
  EXPECT_EQ(segment_slice(back, probe), segment_slice(ma, probe));
  std::filesystem::remove(path);
}

TEST(Training, OverfitsSingleSlice) {
  const auto s = labelled_slice(1, 10);
  SegNetConfig cfg;
  cfg.steps = 1500;
  cfg.batch = 16;
  cfg.seed = 2;
  cfg.reflection_augmentation = false;
  MixedSampler sampler({s}, {}, std::nullopt, 9, cfg.foreground_fraction, false);
  const auto m = train_segnet(cfg, sampler);
  const auto pred = segment_slice(m, s.mr);
  const auto r = eval::dsc_report(pred, s.labels);
  EXPECT_GE(r.overall, 0.95);
  EXPECT_LT(m.loss_curve.back()["loss"].get<double>(), m.loss_curve.front()["loss"].get<double>());
}
