#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include <torch/torch.h>

#include "gansfer/phantom.hpp"
#include "gansfer/synth.hpp"

using namespace gansfer;
using namespace gansfer::synth;

namespace {

Mask disc(int size, double cx, double cy, double r) {
  Mask m(size, size, 0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) m(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  return m;
}

Image constant_image(int size, float v) { return Image(size, size, v); }

// Single-slice structure masks with the same anatomy for every structure.
StructureMasks single_slice_masks(const Mask& anatomy) {
  StructureMasks sm;
  for (auto& m : sm.masks) {
    m = MaskVolume(anatomy.width(), anatomy.height(), 1, 0);
    m.set_plane(0, anatomy);
  }
  return sm;
}

// Sample whose channel 1 carries `seg`; other structure channels are zero.
SyntheticSample make_sample(const Image& mr, const Image& seg) {
  SyntheticSample s;
  s.slice_index = 0;
  s.channels.push_back(mr);
  s.channels.push_back(seg);
  for (int c = 1; c < data::kNumStructures; ++c)
    s.channels.push_back(constant_image(mr.width(), 0.0f));
  return s;
}

Image from_mask(const Mask& m, float on) {
  Image im(m.width(), m.height(), 0.0f);
  for (std::size_t i = 0; i < m.size(); ++i) im[i] = m[i] ? on : 0.0f;
  return im;
}

}  // namespace

TEST(Morphology, ClosingBridgesOnePixelGap) {
  Mask m(7, 7, 0);
  for (int y = 2; y < 5; ++y)
    for (int x = 1; x < 6; ++x) m(x, y) = x != 3;
  const auto c = close_cross(m);
  EXPECT_EQ(c(3, 3), 1);
}

TEST(Morphology, FillHolesAndCount) {
  Mask ring(5, 5, 0);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) ring(x, y) = 1;
  ring(2, 2) = 0;
  EXPECT_EQ(count_holes(ring), 1u);
  const auto f = fill_holes(ring);
  EXPECT_EQ(f(2, 2), 1);
  EXPECT_EQ(count_holes(f), 0u);
  // Background touching the border is never filled.
  Mask open_ring = ring;
  open_ring(2, 1) = 0;
  EXPECT_EQ(fill_holes(open_ring)(2, 2), 0);
}

TEST(Morphology, FourNeighbourEnclosureIsAHole) {
  Mask m(3, 3, 0);
  m(1, 0) = m(0, 1) = m(2, 1) = m(1, 2) = 1;
  EXPECT_EQ(count_holes(m), 1u);
}

TEST(Morphology, RemoveSmallComponents) {
  Mask m(10, 10, 0);
  m(0, 0) = m(1, 0) = m(0, 1) = 1;  // area 3
  for (int y = 5; y < 7; ++y)
    for (int x = 5; x < 7; ++x) m(x, y) = 1;  // area 4
  m(9, 9) = 1;
  const auto r = remove_small_components(m, 4);
  EXPECT_EQ(count_nonzero(r), 4u);
  EXPECT_EQ(r(5, 5), 1);
  int n = 0;
  label_components(m, n);
  EXPECT_EQ(n, 3);
}

TEST(Morphology, OpeningRemovesSpurs) {
  Mask m = disc(16, 8, 8, 4);
  for (int x = 13; x < 16; ++x) m(x, 8) = 1;  // one-pixel spur
  const auto o = open_cross(m);
  EXPECT_EQ(o(14, 8), 0);
  EXPECT_EQ(o(8, 8), 1);
}

TEST(Otsu, SeparatesBimodalValues) {
  std::vector<float> v;
  for (int i = 0; i < 50; ++i) v.push_back(0.01f * (i % 5));
  for (int i = 0; i < 20; ++i) v.push_back(1.0f + 0.01f * (i % 3));
  const auto r = otsu_threshold(v);
  EXPECT_FALSE(r.fallback);
  EXPECT_GE(r.threshold, 0.039);
  EXPECT_LT(r.threshold, 1.0);
  int above = 0;
  for (float x : v) above += x > r.threshold;
  EXPECT_EQ(above, 20);
}

TEST(Otsu, ConstantFallsBackToHalfMax) {
  const auto r = otsu_threshold({0.8f, 0.8f, 0.8f});
  EXPECT_TRUE(r.fallback);
  EXPECT_FLOAT_EQ(static_cast<float>(r.threshold), 0.4f);
}

TEST(AssignSlice, ExactTieAndNoise) {
  Rng rng(3);
  std::vector<data::IndexedSlice<float>> pool;
  for (int z = 0; z < 20; ++z) {
    Image im(8, 8);
    for (auto& v : im.values()) v = static_cast<float>(rng.normal());
    pool.push_back({z, im});
  }
  EXPECT_EQ(assign_slice(pool[17].plane, pool), 17);

  Image noisy = pool[17].plane;
  for (auto& v : noisy.values()) v += static_cast<float>(1e-3 * rng.normal());
  EXPECT_EQ(assign_slice(noisy, pool), 17);

  // Midpoint of slices 3 and 9 is equidistant from both; constructed so that
  // every other slice is farther away.
  std::vector<data::IndexedSlice<float>> sym = {
      {9, constant_image(4, 1.0f)}, {3, constant_image(4, -1.0f)}, {5, constant_image(4, 5.0f)}};
  EXPECT_EQ(assign_slice(constant_image(4, 0.0f), sym), 3);

  EXPECT_THROW(assign_slice(noisy, {}), EmptyPool);
}

TEST(DistanceTransform, MatchesBruteForceAnisotropic) {
  Rng rng(11);
  const std::array<double, 3> sp{1.0, 1.5, 2.5};
  for (int trial = 0; trial < 5; ++trial) {
    MaskVolume m(7, 6, 5, 0);
    for (auto& v : m.values()) v = rng.uniform() < 0.05;
    m(static_cast<int>(rng.below(7)), 0, 0) = 1;
    const auto d = squared_distance_transform(m, sp);
    for (int z = 0; z < 5; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 7; ++x) {
          double best = std::numeric_limits<double>::infinity();
          for (int c = 0; c < 5; ++c)
            for (int b = 0; b < 6; ++b)
              for (int a = 0; a < 7; ++a)
                if (m(a, b, c)) {
                  const double dx = (x - a) * sp[0], dy = (y - b) * sp[1], dz = (z - c) * sp[2];
                  best = std::min(best, dx * dx + dy * dy + dz * dz);
                }
          EXPECT_NEAR(d(x, y, z), best, 1e-9);
        }
  }
}

TEST(StructureMasks, RadiusZeroIsUnion) {
  auto a = phantom::generate_phantom(1, 25, data::Cdr::k0).sample;
  auto b = phantom::generate_phantom(2, 80, data::Cdr::k1).sample;
  const auto sm = build_structure_masks({a, b}, 0.0);
  for (int s = 0; s < data::kNumStructures; ++s)
    for (std::size_t i = 0; i < sm.masks[s].size(); ++i)
      EXPECT_EQ(sm.masks[s][i], a.labels[s][i] | b.labels[s][i]);
  EXPECT_EQ(sm.provenance.size(), 2u);
}

TEST(StructureMasks, SupersetOfEverySubject) {
  auto a = phantom::generate_phantom(1, 25, data::Cdr::k0).sample;
  auto b = phantom::generate_phantom(2, 80, data::Cdr::k1).sample;
  const auto sm = build_structure_masks({a, b}, 10.0);
  for (const auto* t : {&a, &b})
    for (int s = 0; s < data::kNumStructures; ++s)
      for (std::size_t i = 0; i < t->labels[s].size(); ++i)
        if (t->labels[s][i]) ASSERT_TRUE(sm.masks[s][i]);
}

TEST(StructureMasks, SeedDilatesToDisc) {
  data::LabelledSample t;
  t.subject_id = "seed";
  t.mr = Volume(41, 41, 1, 1.0f);
  for (auto& m : t.labels) m = MaskVolume(41, 41, 1, 0);
  t.labels[0](20, 20, 0) = 1;
  const auto sm = build_structure_masks({t}, 10.0, {1.0, 1.0, 1.0});
  const double area = static_cast<double>(count_nonzero(sm.masks[0]));
  // Within one pixel ring of the continuous disc area.
  const double ring = 2.0 * M_PI * 10.0;
  EXPECT_NEAR(area, M_PI * 100.0, ring);
  EXPECT_EQ(sm.masks[0](30, 20, 0), 1);
  EXPECT_EQ(sm.masks[0](31, 20, 0), 0);
  EXPECT_EQ(count_nonzero(sm.masks[1]), 0u);
}

TEST(Postprocess, SolidDiscIsFixedPoint) {
  const Mask anatomy = disc(16, 7.5, 7.5, 7);
  const Mask d = disc(16, 7.5, 7.5, 4);
  const auto s = make_sample(constant_image(16, 0.7f), from_mask(d, 1.0f));
  const auto r = postprocess(s, single_slice_masks(anatomy));
  EXPECT_EQ(r.labels[0], d);
  for (int c = 1; c < data::kNumStructures; ++c) EXPECT_EQ(count_nonzero(r.labels[c]), 0u);
}

TEST(Postprocess, FillsInteriorHoleAndDropsOutsideBlob) {
  const Mask anatomy = disc(16, 7.5, 7.5, 6);
  const Mask d = disc(16, 7.5, 7.5, 4);
  Image seg = from_mask(d, 1.0f);
  seg(7, 7) = 0.0f;  // interior hole
  seg(0, 0) = seg(1, 0) = seg(0, 1) = 1.0f;  // blob outside anatomy
  const auto s = make_sample(constant_image(16, 0.7f), seg);
  const auto r = postprocess(s, single_slice_masks(anatomy));
  EXPECT_EQ(r.trace[0].binarized(7, 7), 0);
  EXPECT_EQ(r.trace[0].binarized(0, 0), 0);
  EXPECT_EQ(r.labels[0], d);
}

TEST(Postprocess, SmallBlobInsideAnatomyRemoved) {
  const Mask anatomy = disc(16, 7.5, 7.5, 7.5);
  const Mask d = disc(16, 5.5, 5.5, 3);
  Image seg = from_mask(d, 1.0f);
  seg(12, 12) = seg(13, 12) = seg(12, 13) = 1.0f;
  const auto s = make_sample(constant_image(16, 0.7f), seg);
  const auto r = postprocess(s, single_slice_masks(anatomy));
  EXPECT_EQ(r.labels[0](12, 12), 0);
  EXPECT_EQ(r.labels[0], d);
}

TEST(Postprocess, IntensityOutliersRemovedThenInteriorRefilled) {
  const Mask anatomy = disc(20, 9.5, 9.5, 9);
  const Mask d = disc(20, 9.5, 9.5, 5);
  Image mr(20, 20, 0.0f);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) mr(x, y) = ((x + y) % 2) ? 1.0f : -1.0f;
  const std::vector<std::pair<int, int>> outliers = {{9, 9}, {10, 9}, {8, 11}, {11, 11}, {9, 5}};
  for (auto [x, y] : outliers) mr(x, y) = 6.0f;
  const auto s = make_sample(mr, from_mask(d, 1.0f));
  const auto r = postprocess(s, single_slice_masks(anatomy));
  const auto& tr = r.trace[0];

  // Oracle statistics over the repaired mask.
  double sum = 0, n = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i]) {
      sum += mr[i];
      n += 1;
    }
  const double mu = sum / n;
  double ss = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i]) ss += (mr[i] - mu) * (mr[i] - mu);
  const double sd = std::sqrt(ss / n);
  EXPECT_EQ(tr.repaired, d);
  EXPECT_NEAR(tr.gate_mean, mu, 1e-12);
  EXPECT_NEAR(tr.gate_sd, sd, 1e-12);

  Mask expected_gated = d;
  for (auto [x, y] : outliers) {
    ASSERT_GT(std::abs(6.0 - mu), 2 * sd);
    expected_gated(x, y) = 0;
  }
  EXPECT_EQ(tr.gated, expected_gated);
  for (auto [x, y] : outliers)
    if (y != 5) EXPECT_EQ(tr.final(x, y), 1) << x << "," << y;
  EXPECT_EQ(tr.final(9, 5), 0);
}

TEST(Postprocess, EmptyChannelGivesEmptyMask) {
  const Mask anatomy = disc(16, 7.5, 7.5, 6);
  Image seg(16, 16, 0.0f);
  Rng rng(1);
  for (auto& v : seg.values()) v = static_cast<float>(0.02 * rng.normal());
  const auto r = postprocess(make_sample(constant_image(16, 0.5f), seg), single_slice_masks(anatomy));
  EXPECT_EQ(count_nonzero(r.labels[0]), 0u);
}

TEST(Postprocess, LabelMapResolvesOverlapByChannelValue) {
  SyntheticSample s = make_sample(constant_image(4, 0.0f), constant_image(4, 0.5f));
  s.channels[2] = constant_image(4, 0.9f);
  for (auto& m : s.binary_labels) m = Mask(4, 4, 0);
  s.binary_labels[0](1, 1) = 1;
  s.binary_labels[1](1, 1) = 1;
  s.binary_labels[0](2, 2) = 1;
  const auto map = synthetic_label_map(s);
  EXPECT_EQ(map(1, 1), 2);
  EXPECT_EQ(map(2, 2), 1);
  EXPECT_EQ(map(0, 0), 0);
}

TEST(Quality, ScoreExamples) {
  std::vector<Image> pool = {constant_image(10, 0.0f)};
  EXPECT_DOUBLE_EQ(quality_score(constant_image(10, 1.0f), pool), 10.0);
  Rng rng(2);
  Image a(10, 10);
  for (auto& v : a.values()) v = static_cast<float>(rng.normal());
  pool.push_back(a);
  EXPECT_EQ(quality_score(a, pool), 0.0);
  EXPECT_THROW(quality_score(a, {}), EmptyPool);
}

TEST(Quality, NonIncreasingAsPoolGrowsAndBatchAgrees) {
  Rng rng(4);
  auto img = [&] {
    Image im(6, 6);
    for (auto& v : im.values()) v = static_cast<float>(rng.normal());
    return im;
  };
  const Image q = img();
  std::vector<Image> pool;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    pool.push_back(img());
    const double s = quality_score(q, pool);
    EXPECT_LE(s, prev);
    prev = s;
  }
  auto to_t = [](const std::vector<Image>& v) {
    auto t = torch::empty({static_cast<long>(v.size()), 1, 6, 6}, torch::kFloat32);
    for (std::size_t i = 0; i < v.size(); ++i)
      for (int k = 0; k < 36; ++k) t.view({-1})[i * 36 + k] = v[i][k];
    return t;
  };
  pool.push_back(q);
  const auto batch = quality_scores(to_t({q, pool[0]}), to_t(pool));
  EXPECT_EQ(batch[0], 0.0);
  EXPECT_EQ(batch[1], 0.0);
}

TEST(Filter, Examples) {
  EXPECT_EQ(filter_by_quality({1, 2, 3, 10}), (std::vector<bool>{true, true, true, false}));
  EXPECT_EQ(filter_by_quality({5, 5, 5}), (std::vector<bool>{true, true, true}));
  EXPECT_EQ(filter_by_quality({7}), (std::vector<bool>{true}));
  EXPECT_DOUBLE_EQ(nearest_rank_percentile({1, 2, 3, 10}, 75), 3.0);
}

TEST(Filter, KeptFractionBoundsProperty) {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(60));
    std::vector<double> s(n);
    for (auto& v : s) v = static_cast<double>(rng.below(8));  // many ties
    const auto keep = filter_by_quality(s);
    const double frac = std::count(keep.begin(), keep.end(), true) / static_cast<double>(n);
    EXPECT_GE(frac, 0.75);
    EXPECT_LE(frac, 1.0);
  }
}

namespace {

gan::GeneratorNet grown_generator(std::uint64_t seed) {
  gan::GanArch a;
  a.latent_dim = 16;
  a.target_res = 32;
  a.fmap_base = 8;
  a.min_channels = 4;
  a.max_channels = 8;
  gan::GeneratorNet g(a, data::kNumGanChannels, seed);
  while (!g.at_target()) g.grow();
  g.set_alpha(1.0);
  return g;
}

}  // namespace

TEST(SynthPipeline, PoolingProvenanceContainmentAndDeterminism) {
  const auto lab = phantom::generate_phantom(1, 25, data::Cdr::k0).sample;
  const auto masks = build_structure_masks({lab}, 10.0);
  const auto assign = assignment_pool({lab});
  std::vector<Image> mr = data::to_mr_slices(lab.mr);
  auto score_pool = torch::empty({static_cast<long>(mr.size()), 1, 32, 32});
  for (std::size_t i = 0; i < mr.size(); ++i)
    score_pool[i][0].copy_(torch::from_blob(mr[i].storage().data(), {32, 32}, torch::kFloat32));
  const auto g2 = grown_generator(1);
  const auto g3 = grown_generator(2);
  SynthConfig cfg;
  cfg.seed = 5;
  cfg.batch = 16;
  const std::vector<SynthSource> src = {{&g2, "p2", 0}, {&g3, "p3", 0}};
  const auto pool = generate_synthetic_dataset(src, 100, masks, assign, score_pool, cfg);
  ASSERT_EQ(pool.samples.size(), 100u);
  const auto kept = pool.kept();
  EXPECT_GE(kept.size(), 75u);
  const auto counts = pool.provenance_counts();
  const int a = counts.value("p2/gan0", 0), b = counts.value("p3/gan0", 0);
  EXPECT_LE(std::abs(a - b), static_cast<int>(0.05 * (a + b)) + 1);
  for (const auto& s : pool.samples)
    for (int c = 0; c < data::kNumStructures; ++c) {
      const auto anat = masks.slice(c, s.slice_index);
      for (std::size_t i = 0; i < anat.size(); ++i)
        if (s.binary_labels[c][i]) ASSERT_TRUE(anat[i]);
    }

  const auto again = generate_synthetic_dataset(src, 100, masks, assign, score_pool, cfg);
  for (std::size_t i = 0; i < pool.samples.size(); ++i) {
    EXPECT_EQ(pool.samples[i].latent_seed, again.samples[i].latent_seed);
    EXPECT_EQ(pool.samples[i].channels, again.samples[i].channels);
    EXPECT_EQ(pool.samples[i].binary_labels, again.samples[i].binary_labels);
    EXPECT_EQ(pool.samples[i].kept, again.samples[i].kept);
  }

  const auto dir = std::filesystem::temp_directory_path() / "gansfer_test_pool";
  std::filesystem::remove_all(dir);
  write_pool(dir, pool);
  const auto back = read_pool(dir);
  ASSERT_EQ(back.samples.size(), pool.samples.size());
  for (std::size_t i = 0; i < pool.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].phase, pool.samples[i].phase);
    EXPECT_EQ(back.samples[i].latent_seed, pool.samples[i].latent_seed);
    EXPECT_EQ(back.samples[i].slice_index, pool.samples[i].slice_index);
    EXPECT_EQ(back.samples[i].kept, pool.samples[i].kept);
    EXPECT_EQ(back.samples[i].binary_labels, pool.samples[i].binary_labels);
  }
  std::filesystem::remove_all(dir);
}
