#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "gansfer/data_model.hpp"
#include "gansfer/gan_core.hpp"

namespace gansfer::synth {

// --- morphology (3x3 cross, 4-connectivity) --------------------------------

Mask dilate_cross(const Mask& m);
Mask erode_cross(const Mask& m);
Mask close_cross(const Mask& m);
Mask open_cross(const Mask& m);
/// Sets every background pixel not 4-connected to the image border.
Mask fill_holes(const Mask& m);
/// Number of background pixels not 4-connected to the border.
std::size_t count_holes(const Mask& m);
/// 4-connected component label per pixel (0 = background, 1..n).
Grid2<int> label_components(const Mask& m, int& n_components);
Mask remove_small_components(const Mask& m, int min_area);
Mask mask_and(const Mask& a, const Mask& b);

struct OtsuResult {
  double threshold = 0.0;
  bool fallback = false;
};

/// Otsu threshold over `values` (256 bins between min and max). Values
/// strictly above the threshold form the upper class. Falls back to half the
/// maximum when the values are constant or no split separates them.
OtsuResult otsu_threshold(const std::vector<float>& values);

// --- slice assignment and anatomical masks ---------------------------------

/// Index of the nearest pool slice in Euclidean distance; ties go to the
/// lowest index.
int assign_slice(const Image& synth_mr, const std::vector<data::IndexedSlice<float>>& pool);

/// Squared Euclidean distance (mm^2) to the nearest set voxel. Voxels with no
/// set voxel anywhere get +inf.
Grid3<double> squared_distance_transform(const MaskVolume& m, std::array<double, 3> spacing_mm);

struct StructureMasks {
  data::StructureMasks3 masks;
  std::vector<std::string> provenance;
  double radius_mm = 0.0;

  int depth() const { return masks.front().nz(); }
  /// Plane of structure `s`; slices outside the stack give an empty mask.
  Mask slice(int s, int z) const;
};

/// ROI at phantom scale: 80 x 80 x 60 mm over 32 x 32 x 20 voxels.
inline constexpr std::array<double, 3> kPhantomSpacingMm{2.5, 2.5, 3.0};

/// Per structure: union over the training masks, dilated to every voxel
/// within `radius_mm`.
StructureMasks build_structure_masks(const std::vector<data::LabelledSample>& train,
                                     double radius_mm,
                                     std::array<double, 3> spacing_mm = kPhantomSpacingMm);

// --- samples and postprocessing --------------------------------------------

struct SyntheticSample {
  /// Channel 0 is MR, 1..7 are segmentation channels.
  std::vector<Image> channels;
  int slice_index = -1;
  data::StructureMasks2 binary_labels;
  double quality_score = 0.0;
  bool kept = true;
  std::string phase;
  int gan_id = 0;
  std::uint64_t latent_seed = 0;
};

struct PostprocessConfig {
  int min_component_area = 4;
  double gate_sigmas = 2.0;
  /// Segmentation-channel values at or below this are never labelled, so
  /// near-zero channels of absent structures stay empty.
  double min_contrast = 0.25;
};

struct ChannelTrace {
  Mask anatomy;
  Mask binarized;
  Mask repaired;
  Mask gated;
  Mask final;
  double threshold = 0.0;
  bool otsu_fallback = false;
  double gate_mean = 0.0;
  double gate_sd = 0.0;
};

struct PostprocessResult {
  data::StructureMasks2 labels;
  std::array<ChannelTrace, data::kNumStructures> trace;
};

PostprocessResult postprocess(const SyntheticSample& sample, const StructureMasks& masks,
                              const PostprocessConfig& cfg = {});

/// Disjoint label map: a pixel claimed by several channels goes to the one
/// with the largest channel value.
Mask synthetic_label_map(const SyntheticSample& sample);

// --- quality scoring ---------------------------------------------------------

/// Minimum Euclidean distance to any pool image.
double quality_score(const Image& synth_mr, const std::vector<Image>& pool);
/// Batched form: synth (M, 1, R, R) against pool (N, 1, R, R); returns M scores.
std::vector<double> quality_scores(const torch::Tensor& synth, const torch::Tensor& pool);

/// Nearest-rank 75th percentile; keeps scores not strictly above it.
std::vector<bool> filter_by_quality(const std::vector<double>& scores);
double nearest_rank_percentile(std::vector<double> values, double pct);

// --- end-to-end synthesis ----------------------------------------------------

struct SynthSource {
  const gan::GeneratorNet* generator = nullptr;
  std::string phase;
  int gan_id = 0;
};

struct SynthConfig {
  int batch = 64;
  std::uint64_t seed = 0;
  PostprocessConfig post;
};

struct SyntheticPool {
  /// Every generated sample; `kept` marks the ones that passed filtering.
  std::vector<SyntheticSample> samples;

  std::vector<const SyntheticSample*> kept() const;
  /// Kept counts keyed "<phase>/gan<id>".
  nlohmann::json provenance_counts() const;
};

/// Splits `n` evenly over the sources; generates and assigns slices only.
SyntheticPool generate_raw(const std::vector<SynthSource>& sources, int n,
                           const std::vector<data::IndexedSlice<float>>& assign_pool,
                           const SynthConfig& cfg);
void postprocess_pool(SyntheticPool& pool, const StructureMasks& masks,
                      const PostprocessConfig& cfg = {});
/// Scores every sample against score_pool (N, 1, R, R) and filters per
/// (phase, gan_id) source.
void score_and_filter(SyntheticPool& pool, const torch::Tensor& score_pool, int batch = 64);

/// generate_raw, postprocess_pool and score_and_filter in sequence.
/// Splits `n` evenly over the sources, generates, assigns slices,
/// postprocesses and scores every sample. Filtering runs per source so that
/// pooled sources keep equal shares.
SyntheticPool generate_synthetic_dataset(const std::vector<SynthSource>& sources, int n,
                                         const StructureMasks& masks,
                                         const std::vector<data::IndexedSlice<float>>& assign_pool,
                                         const torch::Tensor& score_pool, const SynthConfig& cfg);

/// MR slices of labelled subjects, indexed by axial position.
std::vector<data::IndexedSlice<float>> assignment_pool(
    const std::vector<data::LabelledSample>& train);

/// Stored in the dataset directory format: one stack per channel, with
/// per-sample provenance in meta.json.
void write_pool(const std::filesystem::path& dir, const SyntheticPool& pool);
SyntheticPool read_pool(const std::filesystem::path& dir);

}  // namespace gansfer::synth
