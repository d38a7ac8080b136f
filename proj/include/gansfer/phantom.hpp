#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gansfer/data_model.hpp"

namespace gansfer::phantom {

/// Bilateral ellipsoid in normalized box coordinates: x, y in [-1, 1]
/// (x = left/right), z in [0, 1] along the slice axis. The mirror copy
/// sits at -cx.
struct Ellipsoid {
  double cx = 0, cy = 0, cz = 0.5;
  double rx = 0, ry = 0, rz = 0.5;

  /// Cross-section scale at height z (0 outside the z extent).
  double section_scale(double z) const;
  bool contains(double x, double y, double z) const;
  /// Analytic area of both hemispheres' largest cross-section.
  double max_section_area() const;
  /// Analytic volume of both hemispheres.
  double volume() const;
};

struct PhantomGeometry {
  int resolution = 32;
  int depth = 20;
  double noise_sigma = 0.02;
};

/// Ground-truth generative parameters of one phantom.
struct PhantomParams {
  std::array<Ellipsoid, data::kNumStructures> structures;
  Ellipsoid ventricles;
  double ventricle_scale = 1.0;
  double atrophy = 1.0;  // medial temporal (hippocampus/amygdala) shrink factor
  double brain_scale = 1.0;
  double intensity_scale = 1.0;
  double wm_intensity = 0.8;  // after intensity_scale
  double gm_intensity = 0.45;
  double csf_intensity = 0.12;
  std::array<double, data::kNumStructures> structure_intensity{};
  std::uint64_t noise_seed = 0;
};

struct PhantomSample {
  data::LabelledSample sample;
  PhantomParams params;
};

/// Label masks rendered analytically from the parameters.
data::StructureMasks3 render_masks(const PhantomParams& params, const PhantomGeometry& geom);
/// Ventricle-analog mask.
MaskVolume render_ventricles(const PhantomParams& params, const PhantomGeometry& geom);

/// Deterministic in (seed, age, cdr, geometry). Random jitter is drawn in a
/// fixed order independent of the covariates, so covariate effects are
/// isolated when the seed is held fixed.
PhantomSample generate_phantom(std::uint64_t seed, double age, data::Cdr cdr,
                               const PhantomGeometry& geom = {});

struct PhantomSpec {
  int n_subjects = 436;   // unlabelled pool
  int n_labelled = 30;    // labelled pool
  std::array<double, 2> age_range{18.0, 96.0};
  std::array<double, 2> labelled_age_range{18.0, 35.0};
  /// Probability per CDR level for the unlabelled pool.
  std::map<double, double> cdr_distribution{
      {0.0, 336.0 / 436.0}, {0.5, 70.0 / 436.0}, {1.0, 28.0 / 436.0}, {2.0, 2.0 / 436.0}};
  /// Pathological (CDR > 0) subjects have ages drawn from [pathology_min_age, max age].
  double pathology_min_age = 60.0;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  int resolution = 32;
  int base_resolution = 4;
  int depth = 20;

  /// Throws ConfigError when probabilities do not sum to 1 or the
  /// resolution is not base * 2^k.
  void validate() const;
  PhantomGeometry geometry() const { return {resolution, depth, noise_sigma}; }
};

struct Cohort {
  std::vector<PhantomSample> labelled;
  /// Masks are kept as evaluation ground truth; training code must only
  /// read the MR channel.
  std::vector<PhantomSample> unlabelled;
};

Cohort generate_cohort(const PhantomSpec& spec);

struct Covariates {
  double age = 0;
  data::Cdr cdr = data::Cdr::k0;
};

/// Generates one phantom per covariate entry with ids `<prefix><index>`.
std::vector<PhantomSample> generate_subjects(std::uint64_t seed,
                                             const std::vector<Covariates>& covariates,
                                             const std::string& prefix,
                                             const PhantomGeometry& geom);

}  // namespace gansfer::phantom
