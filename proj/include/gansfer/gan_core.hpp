#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "gansfer/checkpoint.hpp"
#include "gansfer/nn.hpp"
#include "gansfer/rng.hpp"

namespace gansfer::gan {

/// Shape of a progressive generator/critic pair.
struct GanArch {
  int latent_dim = 256;
  int base_res = 4;
  int target_res = 32;
  /// Feature maps at stage k: clamp(fmap_base >> k, min_channels, max_channels).
  int fmap_base = 128;
  int min_channels = 8;
  int max_channels = 64;
  bool minibatch_stddev = true;
  torch::Dtype dtype = torch::kFloat32;

  int channels(int stage) const;
  /// Number of resolution doublings from base to target; throws NonDyadic.
  int doublings() const;
  int resolution(int stage) const { return base_res << stage; }

  nlohmann::json to_json() const;
  static GanArch from_json(const nlohmann::json& j);
};

/// Progressive-growing generator. Parameter groups are "block<k>" and
/// "to_out<k>"; the output layer is a 1x1 convolution with no nonlinearity.
class GeneratorNet {
 public:
  GeneratorNet(const GanArch& arch, int out_channels, std::uint64_t seed);
  GeneratorNet(GeneratorNet&&) = default;
  GeneratorNet& operator=(GeneratorNet&&) = default;
  GeneratorNet(const GeneratorNet&) = delete;
  GeneratorNet& operator=(const GeneratorNet&) = delete;

  /// Deep copy including freeze mask and init RNG.
  GeneratorNet clone() const;

  /// (N, latent_dim) -> (N, out_channels, R, R). Throws DimensionMismatch.
  torch::Tensor generate(const torch::Tensor& z) const;
  /// Feature maps of the given stage's block (stage <= current stage).
  torch::Tensor features(const torch::Tensor& z, int stage) const;
  /// The linear output layer of `stage` applied to feature maps.
  torch::Tensor to_output(int stage, const torch::Tensor& features) const;

  /// Appends one resolution block and its output layer; alpha resets to 0.
  void grow();

  int stage() const { return static_cast<int>(blocks_.size()) - 1; }
  int resolution() const { return arch_.resolution(stage()); }
  bool at_target() const { return stage() == arch_.doublings(); }
  double alpha() const { return alpha_; }
  void set_alpha(double a);
  int out_channels() const { return out_channels_; }
  const GanArch& arch() const { return arch_; }

  nn::ParamRegistry& params() { return params_; }
  const nn::ParamRegistry& params() const { return params_; }

  /// Groups of the last resolution block plus every output layer.
  nn::LayerSelector final_layers() const;
  std::string block_name(int k) const { return "block" + std::to_string(k); }
  std::string output_name(int k) const { return "to_out" + std::to_string(k); }

  void save(Checkpoint& ck, const std::string& prefix) const;
  static GeneratorNet load(const Checkpoint& ck, const std::string& prefix);

 private:
  struct Block {
    bool has_dense = false;
    nn::EqLinear dense;
    nn::EqConv2d conv1;
    nn::EqConv2d conv2;
  };
  void add_stage();
  torch::Tensor run_block(int k, const torch::Tensor& x) const;

  GanArch arch_;
  int out_channels_ = 0;
  double alpha_ = 1.0;
  Rng init_rng_;
  nn::ParamRegistry params_;
  std::vector<Block> blocks_;
  std::vector<nn::EqConv2d> to_out_;
};

/// Mirror-image progressive critic with scalar output. Parameter groups are
/// "from_in<k>" and "block<k>".
class CriticNet {
 public:
  CriticNet(const GanArch& arch, int in_channels, std::uint64_t seed);
  CriticNet(CriticNet&&) = default;
  CriticNet& operator=(CriticNet&&) = default;
  CriticNet(const CriticNet&) = delete;
  CriticNet& operator=(const CriticNet&) = delete;

  CriticNet clone() const;

  /// (N, in_channels, R, R) -> (N). Throws DimensionMismatch.
  torch::Tensor score(const torch::Tensor& x) const;

  void grow();
  /// Grows until the critic reaches the given stage.
  void grow_to(int stage);

  int stage() const { return static_cast<int>(blocks_.size()) - 1; }
  int resolution() const { return arch_.resolution(stage()); }
  double alpha() const { return alpha_; }
  void set_alpha(double a);
  int in_channels() const { return in_channels_; }
  const GanArch& arch() const { return arch_; }

  nn::ParamRegistry& params() { return params_; }
  const nn::ParamRegistry& params() const { return params_; }

  void save(Checkpoint& ck, const std::string& prefix) const;
  static CriticNet load(const Checkpoint& ck, const std::string& prefix);

 private:
  struct Block {
    nn::EqConv2d conv1;
    nn::EqConv2d conv2;
    nn::EqLinear dense1;  // final block only
    nn::EqLinear dense2;  // final block only
  };
  void add_stage();
  torch::Tensor run_block(int k, const torch::Tensor& x) const;

  GanArch arch_;
  int in_channels_ = 0;
  double alpha_ = 1.0;
  Rng init_rng_;
  nn::ParamRegistry params_;
  std::vector<Block> blocks_;
  std::vector<nn::EqConv2d> from_in_;
};

/// Builds a generator with base..target stages (alpha = 1). NonDyadic if
/// target is not base * 2^k.
GeneratorNet build_generator(int latent_dim, int base_res, int target_res, int out_channels,
                             std::uint64_t seed = 0, GanArch arch = {});

struct GanTrainConfig {
  int batch_size = 8;
  int critic_updates_per_gen = 1;
  double gp_weight = 10.0;
  double drift_weight = 1e-3;
  nn::AdamConfig generator_adam{};
  nn::AdamConfig critic_adam{};
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static GanTrainConfig from_json(const nlohmann::json& j);
};

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct CriticLossParts {
  torch::Tensor loss;  // differentiable w.r.t. critic parameters
  double wasserstein = 0.0;
  double gradient_penalty = 0.0;
  double drift = 0.0;
};

/// E[D(fake)] - E[D(real)] + gp_weight * E[(|grad D(x_hat)|_2 - 1)^2]
/// + drift_weight * E[D(real)^2], with x_hat = eps * real + (1 - eps) * fake
/// and eps of shape (N, 1, 1, 1).
CriticLossParts critic_loss(const CriticFn& critic, const torch::Tensor& real,
                            const torch::Tensor& fake, const torch::Tensor& eps,
                            double gp_weight, double drift_weight);
CriticLossParts critic_loss(const CriticNet& critic, const torch::Tensor& real,
                            const torch::Tensor& fake, const torch::Tensor& eps,
                            double gp_weight, double drift_weight);

/// Source of real training batches at a given resolution and fade-in.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual torch::Tensor sample(int batch, int resolution, double alpha, Rng& rng) = 0;
  virtual int channels() const = 0;
};

/// Uniform sampling with replacement from an in-memory image stack.
/// During fade-in real images are blended with their upsampled half
/// resolution version, mirroring the networks' fade-in.
class TensorPool : public BatchSource {
 public:
  /// images: (N, C, H, W), H == W.
  explicit TensorPool(torch::Tensor images);
  torch::Tensor sample(int batch, int resolution, double alpha, Rng& rng) override;
  int channels() const override { return static_cast<int>(full_.size(1)); }
  std::int64_t size() const { return full_.size(0); }
  const torch::Tensor& images() const { return full_; }
  /// Images resized to `resolution` by average pooling.
  torch::Tensor at_resolution(int resolution) const;

 private:
  torch::Tensor full_;
};

/// One adversarial objective acting on a slice of the generator's channels.
struct CriticHead {
  std::string name;
  CriticNet* critic = nullptr;
  nn::FreezeAwareAdam* optimizer = nullptr;
  BatchSource* real = nullptr;
  int first_channel = 0;
  int channel_count = 0;
  double weight = 1.0;
};

struct StepMetrics {
  int critic_updates = 0;
  std::vector<double> critic_loss;  // last critic loss per head
  std::vector<double> wasserstein;
  double generator_loss = 0.0;
};

/// `critic_updates` critic updates (each updating every head in turn)
/// followed by one generator update with loss sum_h w_h * -E[D_h(fake_h)].
/// Frozen parameter groups are never touched.
StepMetrics train_step(GeneratorNet& g, nn::FreezeAwareAdam& g_opt,
                       std::vector<CriticHead>& heads, int critic_updates,
                       const GanTrainConfig& cfg, Rng& rng);

/// Single-critic form using cfg.critic_updates_per_gen.
StepMetrics train_step(GeneratorNet& g, CriticNet& d, nn::FreezeAwareAdam& g_opt,
                       nn::FreezeAwareAdam& d_opt, BatchSource& real,
                       const GanTrainConfig& cfg, Rng& rng);

/// Only the generator half of train_step, with an explicit latent batch.
double generator_update(GeneratorNet& g, nn::FreezeAwareAdam& g_opt,
                        std::vector<CriticHead>& heads, const torch::Tensor& z);

/// Latent batch drawn from rng.
torch::Tensor sample_latents(int batch, int latent_dim, Rng& rng, torch::Dtype dtype);

/// Channel slice [first, first + count) of an image batch.
torch::Tensor select_channels(const torch::Tensor& x, int first, int count);

}  // namespace gansfer::gan
