#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gansfer/grid.hpp"

namespace gansfer::data {

inline constexpr int kNumStructures = 7;
inline constexpr int kNumGanChannels = kNumStructures + 1;

/// Structure order shared by label channels, label-map ids (1..7) and tables.
inline constexpr std::array<std::string_view, kNumStructures> kStructureNames = {
    "accumbens", "amygdala", "caudate", "hippocampus",
    "pallidum",  "putamen",  "thalamus"};

/// Short column headers used in result tables.
inline constexpr std::array<std::string_view, kNumStructures> kStructureAbbrev = {
    "Ac.", "Am.", "Ca.", "Hi.", "Pa.", "Pu.", "Th."};

/// Clinical Dementia Rating.
enum class Cdr : std::uint8_t { k0, k0_5, k1, k2, k3 };

double cdr_value(Cdr cdr);
Cdr cdr_from_value(double value);
/// Ordinal 0..4, used for monotone phantom effects.
int cdr_level(Cdr cdr);

using StructureMasks3 = std::array<MaskVolume, kNumStructures>;
using StructureMasks2 = std::array<Mask, kNumStructures>;

struct LabelledSample {
  std::string subject_id;
  Volume mr;
  StructureMasks3 labels;
  double age = 0.0;
  Cdr cdr = Cdr::k0;
  bool is_repeat = false;

  /// Throws InvalidSample when masks are misshaped, non-binary or overlap.
  void validate() const;
};

/// Converts disjoint binary masks to a label map (0 = background, i+1 = structure i).
MaskVolume to_label_map(const StructureMasks3& labels);
Mask to_label_map(const StructureMasks2& labels);
StructureMasks2 from_label_map(const Mask& map);
StructureMasks3 from_label_map(const MaskVolume& map);

enum class SliceSource : std::uint8_t { kReal, kSynthetic };

/// GAN training unit: channel 0 is MR, channels 1..7 are segmentation contrast.
struct MultiChannelSlice {
  std::vector<Image> channels;
  int slice_index = 0;
  SliceSource source = SliceSource::kReal;

  int width() const { return channels.empty() ? 0 : channels.front().width(); }
  int height() const { return channels.empty() ? 0 : channels.front().height(); }
};

struct DatasetSplit {
  int fold_id = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  int labelled_budget = 0;
  std::vector<std::string> labelled_subset;
};

/// Returns a split whose labelled subset is the first `budget` train ids
/// after a seeded shuffle.
DatasetSplit with_labelled_budget(DatasetSplit split, int budget, std::uint64_t seed);

// --- intensity handling ---------------------------------------------------

/// Value written to background voxels by normalize_intensity.
inline constexpr float kBackgroundValue = 0.0f;

/// Marks voxels that are exactly zero (skull-stripped convention).
MaskVolume background_from_zero(const Volume& volume);

/// Zero-mean unit-variance (population) over non-background voxels.
/// Background voxels (mask != 0) are set to kBackgroundValue.
Volume normalize_intensity(const Volume& volume, const MaskVolume& background_mask);

// --- geometry -------------------------------------------------------------

struct RoiBox {
  int x0 = 0, y0 = 0, z0 = 0;
  int nx = 0, ny = 0, nz = 0;

  static RoiBox paper_scale(int x0, int y0, int z0) { return {x0, y0, z0, 80, 80, 60}; }
  static RoiBox phantom_scale(int x0, int y0, int z0) { return {x0, y0, z0, 32, 32, 20}; }
};

template <typename T>
Grid3<T> extract_roi(const Grid3<T>& volume, const RoiBox& roi) {
  if (roi.x0 < 0 || roi.y0 < 0 || roi.z0 < 0 || roi.nx <= 0 || roi.ny <= 0 ||
      roi.nz <= 0 || roi.x0 + roi.nx > volume.nx() ||
      roi.y0 + roi.ny > volume.ny() || roi.z0 + roi.nz > volume.nz())
    throw OutOfBounds("ROI exceeds volume bounds");
  Grid3<T> out(roi.nx, roi.ny, roi.nz);
  for (int z = 0; z < roi.nz; ++z)
    for (int y = 0; y < roi.ny; ++y)
      for (int x = 0; x < roi.nx; ++x)
        out(x, y, z) = volume(roi.x0 + x, roi.y0 + y, roi.z0 + z);
  return out;
}

template <typename T>
struct IndexedSlice {
  int index = 0;
  Grid2<T> plane;
};

template <typename T>
std::vector<IndexedSlice<T>> slice_axial(const Grid3<T>& volume) {
  std::vector<IndexedSlice<T>> out;
  out.reserve(volume.nz());
  for (int z = 0; z < volume.nz(); ++z) out.push_back({z, volume.plane(z)});
  return out;
}

/// Inverse of slice_axial. Slices are placed by their index.
template <typename T>
Grid3<T> restack(const std::vector<IndexedSlice<T>>& slices) {
  if (slices.empty()) return {};
  const int nx = slices.front().plane.width();
  const int ny = slices.front().plane.height();
  Grid3<T> out(nx, ny, static_cast<int>(slices.size()));
  for (const auto& s : slices) {
    if (s.index < 0 || s.index >= out.nz())
      throw OutOfBounds("slice index outside restack range");
    out.set_plane(s.index, s.plane);
  }
  return out;
}

// --- segmentation-channel preprocessing ------------------------------------

struct WmEstimation {
  int bins = 64;
};

/// Histogram mode over the brighter half of the foreground pixels (those at
/// or above the median). Returns the mean of the pixels in the modal bin.
double estimate_wm_intensity(const Image& mr_slice, const Mask& foreground,
                             const WmEstimation& spec = {});

/// channel c = (mr - wm) inside mask c and 0 outside, negated per structure
/// when the structure's mean difference is negative.
std::array<Image, kNumStructures> preprocess_seg_channels(const Image& mr_slice,
                                                          const StructureMasks2& labels,
                                                          double wm);

/// Full per-subject conversion to GAN slices: background detection,
/// normalization, per-slice WM estimation and channel preprocessing.
/// Slices without foreground use the volume-level WM estimate.
std::vector<MultiChannelSlice> to_gan_slices(const LabelledSample& sample,
                                             const WmEstimation& spec = {});

/// Normalized MR slices of an unlabelled subject (channel 0 only).
std::vector<Image> to_mr_slices(const Volume& mr);

/// Binary masks of one axial plane.
StructureMasks2 labels_at(const StructureMasks3& labels, int z);

}  // namespace gansfer::data
