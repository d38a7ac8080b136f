#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "gansfer/rng.hpp"

namespace gansfer::nn {

/// Named set of tensors that freeze and unfreeze together.
struct ParamGroup {
  std::string name;
  std::vector<torch::Tensor> tensors;
  bool frozen = false;
};

/// Selects parameter groups by exact name; "*" selects every group.
using LayerSelector = std::vector<std::string>;

class ParamRegistry {
 public:
  ParamGroup& add(const std::string& name);
  ParamGroup& group(const std::string& name);
  const ParamGroup& group(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

  /// Throws UnknownLayer if any selector entry does not resolve.
  void set_trainable(const LayerSelector& selector, bool trainable);
  /// Names of frozen groups in registration order.
  std::vector<std::string> frozen() const;
  /// requires_grad follows the freeze mask unless `force_off`.
  void sync_requires_grad(bool force_off = false);

  std::size_t parameter_count() const;

 private:
  std::vector<ParamGroup> groups_;
};

/// Deep copy of every group's tensors, used for bit-exact audits.
struct ParamSnapshot {
  std::vector<std::string> names;
  std::vector<std::vector<torch::Tensor>> tensors;

  static ParamSnapshot take(const ParamRegistry& registry);
  /// True when every tensor of the named group is bit-identical.
  bool group_equal(const ParamRegistry& registry, const std::string& name) const;
  /// Maximum absolute difference over the named group.
  double group_max_abs_diff(const ParamRegistry& registry, const std::string& name) const;
};

/// FNV-1a over the raw bytes of every parameter.
std::uint64_t parameter_hash(const ParamRegistry& registry);
std::uint64_t tensor_hash(const torch::Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// N(0, 1) tensor drawn from `rng` (row-major order).
torch::Tensor randn(const std::vector<std::int64_t>& shape, Rng& rng, torch::Dtype dtype);
torch::Tensor rand_uniform(const std::vector<std::int64_t>& shape, Rng& rng, torch::Dtype dtype);

/// Convolution with runtime He scaling (equalized learning rate).
struct EqConv2d {
  torch::Tensor weight;  // (out, in, k, k), N(0, 1) at init
  torch::Tensor bias;    // (out)
  double scale = 1.0;
  int padding = 0;

  static EqConv2d create(ParamGroup& group, int in, int out, int kernel, double gain,
                         Rng& rng, torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;
  /// Weight as applied in forward().
  torch::Tensor effective_weight() const { return weight * scale; }
};

struct EqLinear {
  torch::Tensor weight;  // (out, in)
  torch::Tensor bias;
  double scale = 1.0;

  static EqLinear create(ParamGroup& group, int in, int out, double gain, Rng& rng,
                         torch::Dtype dtype);
  torch::Tensor forward(const torch::Tensor& x) const;
};

torch::Tensor pixel_norm(const torch::Tensor& x);
torch::Tensor lrelu(const torch::Tensor& x);
torch::Tensor upsample2x(const torch::Tensor& x);
torch::Tensor downsample2x(const torch::Tensor& x);
/// Nearest-neighbour upsample by an integer factor.
torch::Tensor upsample_nearest(const torch::Tensor& x, int factor);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam over parameter groups. Frozen groups are skipped entirely: neither
/// their parameters nor their moment estimates nor their step counters move.
class FreezeAwareAdam {
 public:
  FreezeAwareAdam() = default;
  explicit FreezeAwareAdam(AdamConfig cfg) : cfg_(cfg) {}

  void zero_grad(ParamRegistry& registry) const;
  void step(ParamRegistry& registry);

  const AdamConfig& config() const { return cfg_; }
  /// Step count for a group (0 if never updated).
  std::int64_t steps(const std::string& group) const;

  /// Serializes moments into `tensors` under `prefix` and counters into json.
  nlohmann::json save(const std::string& prefix,
                      std::vector<std::pair<std::string, torch::Tensor>>& tensors) const;
  void load(const nlohmann::json& meta, const std::string& prefix,
            const std::vector<std::pair<std::string, torch::Tensor>>& tensors);

 private:
  struct GroupState {
    std::string name;
    std::int64_t step = 0;
    std::vector<torch::Tensor> m;
    std::vector<torch::Tensor> v;
  };
  GroupState& state_for(const ParamGroup& group);

  AdamConfig cfg_;
  std::vector<GroupState> states_;
};

}  // namespace gansfer::nn
