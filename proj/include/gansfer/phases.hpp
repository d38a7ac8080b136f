#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "gansfer/data_model.hpp"
#include "gansfer/gan_core.hpp"

namespace gansfer::phases {

enum class Phase : std::uint8_t { kNone = 0, kP1 = 1, kP2 = 2, kP3 = 3 };

/// Image budgets count generated images consumed by generator updates,
/// i.e. batch_size per generator update.
struct Phase1Config {
  /// Images per stage spent fading in the new block (stage 0 has none).
  std::int64_t fade_images = 2000;
  /// Images per stage at alpha = 1.
  std::int64_t stable_images = 2000;
};

struct Phase2Config {
  std::int64_t images = 4000;
  int warmup_cycles = 5;
  int warmup_ratio = 100;
  /// Trailing resolution blocks frozen together with every output layer.
  int frozen_blocks = 1;
};

struct Phase3Config {
  std::int64_t images = 4000;
  /// Images between consecutive block releases.
  std::int64_t unfreeze_budget = 1000;
  double image_weight = 1.0;
  double seg_weight = 1.0;
  /// Synthetic self-teach pool size as a multiple of the labelled slice count.
  int selfteach_multiplier = 10;
};

struct GansferConfig {
  gan::GanArch arch;
  gan::GanTrainConfig train;
  Phase1Config p1;
  Phase2Config p2;
  Phase3Config p3;
  /// Generator updates between progress lines on stderr (0 = silent).
  int log_every = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static GansferConfig from_json(const nlohmann::json& j);
};

struct UnfreezeStep {
  std::int64_t image_budget = 0;
  nn::LayerSelector layers;
};

/// Everything a phase hands to the next one.
struct PhaseState {
  Phase phase = Phase::kNone;
  gan::GeneratorNet generator;
  std::unique_ptr<gan::CriticNet> joint;
  std::unique_ptr<gan::CriticNet> d_image;
  std::unique_ptr<gan::CriticNet> d_seg;
  nn::FreezeAwareAdam g_opt;
  nn::FreezeAwareAdam joint_opt;
  nn::FreezeAwareAdam d_image_opt;
  nn::FreezeAwareAdam d_seg_opt;
  nn::LayerSelector frozen_layers;
  std::vector<UnfreezeStep> unfreeze_schedule;
  Rng rng;
  /// Per-phase logs keyed "p1", "p2", "p3".
  nlohmann::json metrics = nlohmann::json::object();

  explicit PhaseState(gan::GeneratorNet g) : generator(std::move(g)) {}
};

void save_state(const PhaseState& state, const std::filesystem::path& path);
PhaseState load_state(const std::filesystem::path& path);

/// Labelled slices as an (N, 8, R, R) tensor.
torch::Tensor slices_to_tensor(const std::vector<data::MultiChannelSlice>& slices,
                               torch::Dtype dtype = torch::kFloat32);
/// Single-channel images as an (N, 1, R, R) tensor.
torch::Tensor images_to_tensor(const std::vector<Image>& images,
                               torch::Dtype dtype = torch::kFloat32);

/// Progressive training of an 8-channel GAN on labelled slices only.
PhaseState run_phase1(const torch::Tensor& labelled, const GansferConfig& cfg);

/// Names frozen for Phase 2: the trailing `frozen_blocks` blocks and every
/// output layer.
nn::LayerSelector phase2_frozen_layers(const gan::GeneratorNet& g, int frozen_blocks);

/// Freezes the final layers, attaches a fresh image critic and trains it
/// against channel 0 of the generator on unlabelled MR slices.
void run_phase2(PhaseState& state, const torch::Tensor& unlabelled_mr,
                const GansferConfig& cfg);

/// Equal mix of real labelled segmentation channels and channels generated
/// after Phase 2. Both halves hold only the 7 segmentation channels.
class SelfTeachSet : public gan::BatchSource {
 public:
  SelfTeachSet(torch::Tensor real_seg, torch::Tensor synthetic_seg);

  /// One presentation: every real sample once plus as many synthetic
  /// samples drawn without replacement, shuffled. Entries >= real count
  /// index the synthetic pool.
  std::vector<std::int64_t> epoch_order(Rng& rng) const;

  torch::Tensor sample(int batch, int resolution, double alpha, Rng& rng) override;
  int channels() const override { return data::kNumStructures; }

  const torch::Tensor& real() const { return real_; }
  const torch::Tensor& synthetic() const { return synthetic_; }
  std::int64_t real_served() const { return real_served_; }
  std::int64_t synthetic_served() const { return synthetic_served_; }

 private:
  torch::Tensor real_;
  torch::Tensor synthetic_;
  std::vector<std::int64_t> queue_;
  std::size_t cursor_ = 0;
  std::int64_t real_served_ = 0;
  std::int64_t synthetic_served_ = 0;
};

SelfTeachSet build_selfteach_set(PhaseState& state, const torch::Tensor& labelled,
                                 const GansferConfig& cfg);

/// Earliest-first release of the blocks frozen in Phase 2, one per
/// `unfreeze_budget` images. Output layers are never released.
std::vector<UnfreezeStep> make_unfreeze_schedule(const PhaseState& state,
                                                 std::int64_t unfreeze_budget);
/// Throws ScheduleExhaustsFinalLayer if any step names an output layer.
void validate_schedule(const gan::GeneratorNet& g, const std::vector<UnfreezeStep>& schedule);

/// Dual-critic fine-tuning with gradual unfreezing. If state.unfreeze_schedule
/// is empty the default schedule is used.
void run_phase3(PhaseState& state, const torch::Tensor& unlabelled_mr, SelfTeachSet& selfteach,
                const GansferConfig& cfg);

/// Generators captured at the end of each phase of one full run.
struct GansferRun {
  std::vector<std::string> group;
  gan::GeneratorNet p1;
  gan::GeneratorNet p2;
  gan::GeneratorNet p3;
  nlohmann::json metrics;
};

/// Phase 1 -> 2 -> 3 on one labelled group. When `checkpoint_dir` is set,
/// p1/p2/p3.ckpt are written there and existing ones are reused.
GansferRun run_gansfer(const torch::Tensor& labelled, const torch::Tensor& unlabelled_mr,
                       const GansferConfig& cfg,
                       const std::optional<std::filesystem::path>& checkpoint_dir = {});

/// Splits N in {12, 24} labelled subjects (in the given order) into groups
/// of 6; throws BadBudget for any other N.
std::vector<std::vector<std::size_t>> multi_gan_groups(std::size_t n_labelled);

/// One GANsfer run per group of 6 labelled subjects.
std::vector<GansferRun> run_multi_gan(const std::vector<data::LabelledSample>& labelled,
                                      const torch::Tensor& unlabelled_mr,
                                      const GansferConfig& cfg,
                                      const std::optional<std::filesystem::path>& root = {});

/// Mean pairwise Euclidean distance among `n` generated MR channels.
double sample_diversity(const gan::GeneratorNet& g, int n, std::uint64_t seed);

}  // namespace gansfer::phases
