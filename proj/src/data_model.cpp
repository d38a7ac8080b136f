#include "gansfer/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gansfer/rng.hpp"

namespace gansfer::data {

double cdr_value(Cdr cdr) {
  switch (cdr) {
    case Cdr::k0: return 0.0;
    case Cdr::k0_5: return 0.5;
    case Cdr::k1: return 1.0;
    case Cdr::k2: return 2.0;
    case Cdr::k3: return 3.0;
  }
  return 0.0;
}

Cdr cdr_from_value(double value) {
  if (value == 0.0) return Cdr::k0;
  if (value == 0.5) return Cdr::k0_5;
  if (value == 1.0) return Cdr::k1;
  if (value == 2.0) return Cdr::k2;
  if (value == 3.0) return Cdr::k3;
  throw InvalidSample("CDR must be one of 0, 0.5, 1, 2, 3");
}

int cdr_level(Cdr cdr) { return static_cast<int>(cdr); }

void LabelledSample::validate() const {
  MaskVolume seen(mr.nx(), mr.ny(), mr.nz(), 0);
  for (int s = 0; s < kNumStructures; ++s) {
    const auto& m = labels[s];
    if (!m.same_shape(mr))
      throw InvalidSample(subject_id + ": label mask shape differs from MR shape");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] > 1) throw InvalidSample(subject_id + ": label mask is not binary");
      if (m[i] && seen[i])
        throw InvalidSample(subject_id + ": structure masks overlap");
      seen[i] |= m[i];
    }
  }
  cdr_from_value(cdr_value(cdr));
}

MaskVolume to_label_map(const StructureMasks3& labels) {
  const auto& ref = labels.front();
  MaskVolume out(ref.nx(), ref.ny(), ref.nz(), 0);
  for (int s = 0; s < kNumStructures; ++s)
    for (std::size_t i = 0; i < out.size(); ++i)
      if (labels[s][i]) out[i] = static_cast<std::uint8_t>(s + 1);
  return out;
}

Mask to_label_map(const StructureMasks2& labels) {
  const auto& ref = labels.front();
  Mask out(ref.width(), ref.height(), 0);
  for (int s = 0; s < kNumStructures; ++s)
    for (std::size_t i = 0; i < out.size(); ++i)
      if (labels[s][i]) out[i] = static_cast<std::uint8_t>(s + 1);
  return out;
}

StructureMasks2 from_label_map(const Mask& map) {
  StructureMasks2 out;
  for (int s = 0; s < kNumStructures; ++s) {
    out[s] = Mask(map.width(), map.height(), 0);
    for (std::size_t i = 0; i < map.size(); ++i) out[s][i] = map[i] == s + 1;
  }
  return out;
}

StructureMasks3 from_label_map(const MaskVolume& map) {
  StructureMasks3 out;
  for (int s = 0; s < kNumStructures; ++s) {
    out[s] = MaskVolume(map.nx(), map.ny(), map.nz(), 0);
    for (std::size_t i = 0; i < map.size(); ++i) out[s][i] = map[i] == s + 1;
  }
  return out;
}

DatasetSplit with_labelled_budget(DatasetSplit split, int budget, std::uint64_t seed) {
  if (budget <= 0 || budget > static_cast<int>(split.train_ids.size()))
    throw BadBudget("labelled budget exceeds training set");
  std::vector<std::string> order = split.train_ids;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  order.resize(budget);
  split.labelled_budget = budget;
  split.labelled_subset = std::move(order);
  return split;
}

MaskVolume background_from_zero(const Volume& volume) {
  MaskVolume out(volume.nx(), volume.ny(), volume.nz(), 0);
  for (std::size_t i = 0; i < volume.size(); ++i) out[i] = volume[i] == 0.0f;
  return out;
}

Volume normalize_intensity(const Volume& volume, const MaskVolume& background_mask) {
  if (!volume.same_shape(background_mask))
    throw ShapeMismatch("background mask shape differs from volume");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < volume.size(); ++i)
    if (!background_mask[i]) {
      sum += volume[i];
      ++n;
    }
  if (n < 2) throw ZeroVariance("fewer than two foreground voxels");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < volume.size(); ++i)
    if (!background_mask[i]) {
      const double d = volume[i] - mean;
      ss += d * d;
    }
  const double var = ss / static_cast<double>(n);
  if (!(var > 0.0)) throw ZeroVariance("foreground intensities are constant");
  const double inv_sd = 1.0 / std::sqrt(var);
  Volume out(volume.nx(), volume.ny(), volume.nz(), kBackgroundValue);
  for (std::size_t i = 0; i < volume.size(); ++i)
    if (!background_mask[i])
      out[i] = static_cast<float>((volume[i] - mean) * inv_sd);
  return out;
}

double estimate_wm_intensity(const Image& mr_slice, const Mask& foreground,
                             const WmEstimation& spec) {
  if (!mr_slice.same_shape(foreground))
    throw ShapeMismatch("foreground mask shape differs from slice");
  std::vector<float> values;
  for (std::size_t i = 0; i < mr_slice.size(); ++i)
    if (foreground[i]) values.push_back(mr_slice[i]);
  if (values.empty()) throw EmptyForeground("slice has no foreground pixels");
  // Upper half of the foreground pixels by intensity.
  const auto half = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), half, values.end());
  const double lo = *half;
  const double hi = *std::max_element(half, values.end());
  if (hi == lo) return hi;

  const int bins = std::max(1, spec.bins);
  const double width = (hi - lo) / bins;
  std::vector<std::size_t> counts(bins, 0);
  std::vector<double> sums(bins, 0.0);
  for (auto it = half; it != values.end(); ++it) {
    const int b = std::clamp(static_cast<int>((*it - lo) / width), 0, bins - 1);
    ++counts[b];
    sums[b] += *it;
  }
  const auto mode = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  return sums[mode] / static_cast<double>(counts[mode]);
}

std::array<Image, kNumStructures> preprocess_seg_channels(const Image& mr_slice,
                                                          const StructureMasks2& labels,
                                                          double wm) {
  std::array<Image, kNumStructures> out;
  for (int s = 0; s < kNumStructures; ++s) {
    const auto& mask = labels[s];
    if (!mask.same_shape(mr_slice))
      throw ShapeMismatch("label mask shape differs from slice");
    Image channel(mr_slice.width(), mr_slice.height(), 0.0f);
    double sum = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) {
        channel[i] = static_cast<float>(mr_slice[i] - wm);
        sum += channel[i];
      }
    if (sum < 0.0)
      for (auto& v : channel.values()) v = -v;
    // -0.0 from negating background keeps the sign bit; normalize it away.
    for (auto& v : channel.values())
      if (v == 0.0f) v = 0.0f;
    out[s] = std::move(channel);
  }
  return out;
}

StructureMasks2 labels_at(const StructureMasks3& labels, int z) {
  StructureMasks2 out;
  for (int s = 0; s < kNumStructures; ++s) out[s] = labels[s].plane(z);
  return out;
}

std::vector<MultiChannelSlice> to_gan_slices(const LabelledSample& sample,
                                             const WmEstimation& spec) {
  sample.validate();
  const auto background = background_from_zero(sample.mr);
  const auto norm = normalize_intensity(sample.mr, background);

  // Volume-level fallback estimate, gathered from every foreground voxel.
  Image all(static_cast<int>(norm.size()), 1);
  Mask all_fg(static_cast<int>(norm.size()), 1);
  for (std::size_t i = 0; i < norm.size(); ++i) {
    all[i] = norm[i];
    all_fg[i] = !background[i];
  }
  const double wm_volume = estimate_wm_intensity(all, all_fg, spec);

  std::vector<MultiChannelSlice> out;
  out.reserve(norm.nz());
  for (int z = 0; z < norm.nz(); ++z) {
    const Image mr = norm.plane(z);
    const Mask bg = background.plane(z);
    Mask fg(mr.width(), mr.height());
    bool any = false;
    for (std::size_t i = 0; i < fg.size(); ++i) {
      fg[i] = !bg[i];
      any |= fg[i] != 0;
    }
    const double wm = any ? estimate_wm_intensity(mr, fg, spec) : wm_volume;
    auto seg = preprocess_seg_channels(mr, labels_at(sample.labels, z), wm);
    MultiChannelSlice slice;
    slice.slice_index = z;
    slice.source = SliceSource::kReal;
    slice.channels.reserve(kNumGanChannels);
    slice.channels.push_back(mr);
    for (auto& c : seg) slice.channels.push_back(std::move(c));
    out.push_back(std::move(slice));
  }
  return out;
}

std::vector<Image> to_mr_slices(const Volume& mr) {
  const auto norm = normalize_intensity(mr, background_from_zero(mr));
  std::vector<Image> out;
  out.reserve(norm.nz());
  for (int z = 0; z < norm.nz(); ++z) out.push_back(norm.plane(z));
  return out;
}

}  // namespace gansfer::data
