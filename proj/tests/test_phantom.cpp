#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gansfer/errors.hpp"
#include "gansfer/phantom.hpp"

using namespace gansfer;
using namespace gansfer::phantom;
using data::Cdr;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

constexpr int kHippocampus = 3;
constexpr int kAmygdala = 1;
constexpr int kCaudate = 2;

}  // namespace

TEST(Phantom, Deterministic) {
  const auto a = generate_phantom(17, 50, Cdr::k0_5);
  const auto b = generate_phantom(17, 50, Cdr::k0_5);
  EXPECT_EQ(a.sample.mr, b.sample.mr);
  EXPECT_EQ(a.sample.labels, b.sample.labels);
}

TEST(Phantom, MasksRegenerateFromParams) {
  const PhantomGeometry geom;
  const auto p = generate_phantom(3, 70, Cdr::k1, geom);
  EXPECT_EQ(render_masks(p.params, geom), p.sample.labels);
}

TEST(Phantom, VentriclesGrowWithAge) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto young = generate_phantom(seed, 20, Cdr::k0);
    const auto old = generate_phantom(seed, 90, Cdr::k0);
    EXPECT_GT(old.params.ventricles.max_section_area(),
              young.params.ventricles.max_section_area());
    const PhantomGeometry geom;
    EXPECT_GT(count_nonzero(render_ventricles(old.params, geom)),
              count_nonzero(render_ventricles(young.params, geom)));
  }
}

TEST(Phantom, MedialTemporalAtrophyWithCdr) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto h0 = generate_phantom(seed, 75, Cdr::k0);
    const auto h1 = generate_phantom(seed, 75, Cdr::k1);
    EXPECT_LT(h1.params.structures[kHippocampus].max_section_area(),
              h0.params.structures[kHippocampus].max_section_area());
    EXPECT_LT(h1.params.structures[kAmygdala].max_section_area(),
              h0.params.structures[kAmygdala].max_section_area());
  }
}

TEST(Phantom, CaudateDisplacedByVentricles) {
  const auto young = generate_phantom(8, 20, Cdr::k0);
  const auto old = generate_phantom(8, 90, Cdr::k0);
  EXPECT_GT(std::abs(old.params.structures[kCaudate].cx),
            std::abs(young.params.structures[kCaudate].cx));
}

TEST(Phantom, MasksDisjointAndNonEmpty) {
  for (double age : {18.0, 50.0, 96.0})
    for (auto cdr : {Cdr::k0, Cdr::k0_5, Cdr::k1, Cdr::k2, Cdr::k3}) {
      const auto p = generate_phantom(5, age, cdr);
      p.sample.validate();
      for (const auto& m : p.sample.labels) EXPECT_GT(count_nonzero(m), 0u);
    }
}

TEST(Phantom, WmEstimateMatchesGroundTruth) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = generate_phantom(seed, 20.0 + 7.0 * seed, seed % 3 ? Cdr::k0 : Cdr::k1);
    for (int z = 2; z < p.sample.mr.nz() - 2; z += 4) {
      const auto plane = p.sample.mr.plane(z);
      Mask fg(plane.width(), plane.height());
      for (std::size_t i = 0; i < plane.size(); ++i) fg[i] = plane[i] != 0.0f;
      EXPECT_NEAR(data::estimate_wm_intensity(plane, fg), p.params.wm_intensity, 0.02)
          << "seed " << seed << " z " << z;
    }
  }
}

TEST(Cohort, SizesAndAgeOrdering) {
  PhantomSpec spec;
  spec.seed = 4;
  const auto c = generate_cohort(spec);
  ASSERT_EQ(c.labelled.size(), 30u);
  ASSERT_EQ(c.unlabelled.size(), 436u);
  std::vector<double> la, ua;
  for (const auto& s : c.labelled) la.push_back(s.sample.age);
  for (const auto& s : c.unlabelled) ua.push_back(s.sample.age);
  EXPECT_LT(median(la), median(ua));
  for (const auto& s : c.labelled) EXPECT_EQ(s.sample.cdr, Cdr::k0);
}

TEST(Cohort, HealthyOnlyDistribution) {
  PhantomSpec spec;
  spec.n_subjects = 40;
  spec.n_labelled = 1;
  spec.cdr_distribution = {{0.0, 1.0}};
  const auto c = generate_cohort(spec);
  for (const auto& s : c.unlabelled) EXPECT_EQ(s.sample.cdr, Cdr::k0);
}

TEST(Cohort, SingleSample) {
  PhantomSpec spec;
  spec.n_subjects = 1;
  spec.n_labelled = 1;
  const auto c = generate_cohort(spec);
  EXPECT_EQ(c.unlabelled.size(), 1u);
}

TEST(Cohort, InvalidSpecRejected) {
  PhantomSpec spec;
  spec.cdr_distribution = {{0.0, 0.5}, {1.0, 0.4}};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.resolution = 24;
  spec.base_resolution = 5;
  EXPECT_THROW(spec.validate(), ConfigError);
}
