#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "gansfer/data_model.hpp"
#include "gansfer/rng.hpp"
#include "gansfer/synth.hpp"

namespace gansfer::seg {

/// Two-pathway patch network. Both pathways stack valid 3x3 convolutions;
/// the context pathway sees a 3x average-pooled region around the same
/// centre and is upsampled back before the 1x1 classifier layers.
struct SegNetConfig {
  int n_classes = 8;
  /// Output segment side (pixels); must be a multiple of `downsample`.
  int segment = 9;
  int downsample = 3;
  std::vector<int> normal_channels{16, 16, 32, 32};
  std::vector<int> context_channels{16, 16, 32, 32};
  int fc_channels = 64;
  int steps = 3000;
  int batch = 32;
  double lr = 1e-3;
  bool reflection_augmentation = true;
  double foreground_fraction = 0.5;
  std::uint64_t seed = 0;
  int log_every = 0;

  int normal_input() const { return segment + 2 * static_cast<int>(normal_channels.size()); }
  int context_input_down() const {
    return segment / downsample + 2 * static_cast<int>(context_channels.size());
  }
  /// Side of the full-resolution region feeding the context pathway.
  int context_input() const { return context_input_down() * downsample; }

  /// Throws ConfigError; `image_size` (when > 0) must hold a normal patch.
  void validate(int image_size = 0) const;
  nlohmann::json to_json() const;
  static SegNetConfig from_json(const nlohmann::json& j);
};

class SegNetImpl : public torch::nn::Module {
 public:
  explicit SegNetImpl(const SegNetConfig& cfg);
  /// normal (B,1,n,n), context (B,1,c,c) -> logits (B, classes, S, S).
  torch::Tensor forward(const torch::Tensor& normal, const torch::Tensor& context);

 private:
  SegNetConfig cfg_;
  torch::nn::Sequential normal_{nullptr};
  torch::nn::Sequential context_{nullptr};
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(SegNet);

/// One training slice: normalized MR and a label map (0 = background).
struct SegSample {
  Image mr;
  Mask labels;
};

std::vector<SegSample> real_samples(const std::vector<data::LabelledSample>& subjects);
std::vector<SegSample> synthetic_samples(const synth::SyntheticPool& pool);

struct Patch {
  torch::Tensor normal;   // (1, n, n)
  torch::Tensor context;  // (1, c, c)
  torch::Tensor labels;   // (S, S) int64, -100 outside the image
};

/// Patch centred on (cx, cy); pixels outside the image read as 0.
Patch extract_patch(const SegSample& s, int cx, int cy, const SegNetConfig& cfg);

/// Draws patches from a real pool and an optional synthetic pool. With ratio
/// r the synthetic pool is chosen with probability 1/(r+1); without a ratio
/// (baseline) only real samples are drawn.
class MixedSampler {
 public:
  MixedSampler(std::vector<SegSample> real, std::vector<SegSample> synthetic,
               std::optional<int> ratio, std::uint64_t seed, double foreground_fraction = 0.5,
               bool reflection = true);

  struct Draw {
    SegSample sample;  // flipped copy when `flipped`
    bool synthetic = false;
    bool flipped = false;
    int cx = 0;
    int cy = 0;
  };

  double synthetic_probability() const;
  /// Source choice only; one Bernoulli draw.
  bool draw_source();
  Draw draw();

  struct Batch {
    torch::Tensor normal, context, labels;
    int synthetic = 0;
  };
  Batch batch(int n, const SegNetConfig& cfg);

  int image_size() const { return real_.front().mr.width(); }
  const Rng& rng() const { return rng_; }

 private:
  std::vector<SegSample> real_;
  std::vector<SegSample> synthetic_;
  std::optional<int> ratio_;
  Rng rng_;
  double foreground_fraction_;
  bool reflection_;
};

struct SegModel {
  SegNetConfig cfg;
  SegNet net{nullptr};
  int image_size = 0;
  /// Mean loss per logging window.
  nlohmann::json loss_curve = nlohmann::json::array();

  void save(const std::filesystem::path& path) const;
  static SegModel load(const std::filesystem::path& path);
};

SegModel train_segnet(const SegNetConfig& cfg, MixedSampler& sampler);

/// Top-left corners of the non-overlapping segments covering an image; the
/// last row and column are clipped at the border.
std::vector<int> tile_origins(int image_size, int segment);

/// Dense label map of one normalized slice.
Mask segment_slice(const SegModel& model, const Image& mr);
/// Per-slice segmentation of a raw volume (normalized internally).
MaskVolume segment(const SegModel& model, const Volume& mr);

/// Hash of all parameters, used to audit seeded reruns.
std::uint64_t weights_hash(const SegModel& model);

}  // namespace gansfer::seg
