#include "gansfer/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <torch/torch.h>

#include "gansfer/errors.hpp"

namespace gansfer::nn {

ParamGroup& ParamRegistry::add(const std::string& name) {
  if (has(name)) throw UnknownLayer("duplicate parameter group " + name);
  groups_.push_back({name, {}, false});
  return groups_.back();
}

ParamGroup& ParamRegistry::group(const std::string& name) {
  for (auto& g : groups_)
    if (g.name == name) return g;
  throw UnknownLayer("no parameter group named " + name);
}

const ParamGroup& ParamRegistry::group(const std::string& name) const {
  for (const auto& g : groups_)
    if (g.name == name) return g;
  throw UnknownLayer("no parameter group named " + name);
}

bool ParamRegistry::has(const std::string& name) const {
  return std::any_of(groups_.begin(), groups_.end(),
                     [&](const ParamGroup& g) { return g.name == name; });
}

void ParamRegistry::set_trainable(const LayerSelector& selector, bool trainable) {
  for (const auto& name : selector)
    if (name != "*" && !has(name)) throw UnknownLayer("no parameter group named " + name);
  for (const auto& name : selector) {
    if (name == "*") {
      for (auto& g : groups_) g.frozen = !trainable;
    } else {
      group(name).frozen = !trainable;
    }
  }
  sync_requires_grad();
}

std::vector<std::string> ParamRegistry::frozen() const {
  std::vector<std::string> out;
  for (const auto& g : groups_)
    if (g.frozen) out.push_back(g.name);
  return out;
}

void ParamRegistry::sync_requires_grad(bool force_off) {
  for (auto& g : groups_)
    for (auto& t : g.tensors) t.set_requires_grad(!force_off && !g.frozen);
}

std::size_t ParamRegistry::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_)
    for (const auto& t : g.tensors) n += static_cast<std::size_t>(t.numel());
  return n;
}

ParamSnapshot ParamSnapshot::take(const ParamRegistry& registry) {
  torch::NoGradGuard guard;
  ParamSnapshot s;
  for (const auto& g : registry.groups()) {
    s.names.push_back(g.name);
    std::vector<torch::Tensor> copies;
    for (const auto& t : g.tensors) copies.push_back(t.detach().clone());
    s.tensors.push_back(std::move(copies));
  }
  return s;
}

bool ParamSnapshot::group_equal(const ParamRegistry& registry, const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw UnknownLayer("group not in snapshot: " + name);
  const auto& saved = tensors[static_cast<std::size_t>(it - names.begin())];
  const auto& live = registry.group(name).tensors;
  if (saved.size() != live.size()) return false;
  for (std::size_t i = 0; i < saved.size(); ++i)
    if (!torch::equal(saved[i], live[i].detach())) return false;
  return true;
}

double ParamSnapshot::group_max_abs_diff(const ParamRegistry& registry,
                                         const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw UnknownLayer("group not in snapshot: " + name);
  const auto& saved = tensors[static_cast<std::size_t>(it - names.begin())];
  const auto& live = registry.group(name).tensors;
  double m = 0.0;
  for (std::size_t i = 0; i < saved.size(); ++i)
    m = std::max(m, (saved[i] - live[i].detach()).abs().max().item<double>());
  return m;
}

std::uint64_t tensor_hash(const torch::Tensor& t, std::uint64_t h) {
  const auto c = t.detach().contiguous().cpu();
  const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
  const auto n = static_cast<std::size_t>(c.numel() * c.element_size());
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t parameter_hash(const ParamRegistry& registry) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& g : registry.groups())
    for (const auto& t : g.tensors) h = tensor_hash(t, h);
  return h;
}

torch::Tensor randn(const std::vector<std::int64_t>& shape, Rng& rng, torch::Dtype dtype) {
  auto t = torch::empty(shape, torch::TensorOptions().dtype(torch::kFloat64));
  auto* p = t.data_ptr<double>();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal();
  return t.to(dtype);
}

torch::Tensor rand_uniform(const std::vector<std::int64_t>& shape, Rng& rng, torch::Dtype dtype) {
  auto t = torch::empty(shape, torch::TensorOptions().dtype(torch::kFloat64));
  auto* p = t.data_ptr<double>();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform();
  return t.to(dtype);
}

EqConv2d EqConv2d::create(ParamGroup& group, int in, int out, int kernel, double gain,
                          Rng& rng, torch::Dtype dtype) {
  EqConv2d c;
  c.weight = randn({out, in, kernel, kernel}, rng, dtype);
  c.bias = torch::zeros({out}, torch::TensorOptions().dtype(dtype));
  c.scale = gain / std::sqrt(static_cast<double>(in) * kernel * kernel);
  c.padding = kernel / 2;
  group.tensors.push_back(c.weight);
  group.tensors.push_back(c.bias);
  return c;
}

torch::Tensor EqConv2d::forward(const torch::Tensor& x) const {
  return torch::conv2d(x, weight * scale, bias, 1, padding);
}

EqLinear EqLinear::create(ParamGroup& group, int in, int out, double gain, Rng& rng,
                          torch::Dtype dtype) {
  EqLinear l;
  l.weight = randn({out, in}, rng, dtype);
  l.bias = torch::zeros({out}, torch::TensorOptions().dtype(dtype));
  l.scale = gain / std::sqrt(static_cast<double>(in));
  group.tensors.push_back(l.weight);
  group.tensors.push_back(l.bias);
  return l;
}

torch::Tensor EqLinear::forward(const torch::Tensor& x) const {
  return torch::linear(x, weight * scale, bias);
}

torch::Tensor pixel_norm(const torch::Tensor& x) {
  if (x.dim() != 4) return x * torch::rsqrt((x * x).mean(1, true) + 1e-8);
  // Channel mean as a 1x1 convolution; a plain mean over dim 1 is several
  // times slower on CPU.
  const auto c = x.size(1);
  const auto avg = torch::full({1, c, 1, 1}, 1.0 / static_cast<double>(c), x.options());
  return x * torch::rsqrt(torch::conv2d(x * x, avg) + 1e-8);
}

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); }

torch::Tensor upsample2x(const torch::Tensor& x) { return upsample_nearest(x, 2); }

torch::Tensor upsample_nearest(const torch::Tensor& x, int factor) {
  if (factor == 1) return x;
  return torch::upsample_nearest2d(x, std::vector<std::int64_t>{x.size(2) * factor, x.size(3) * factor});
}

torch::Tensor downsample2x(const torch::Tensor& x) { return torch::avg_pool2d(x, 2); }

FreezeAwareAdam::GroupState& FreezeAwareAdam::state_for(const ParamGroup& group) {
  for (auto& s : states_)
    if (s.name == group.name) return s;
  GroupState s;
  s.name = group.name;
  for (const auto& t : group.tensors) {
    s.m.push_back(torch::zeros_like(t.detach()));
    s.v.push_back(torch::zeros_like(t.detach()));
  }
  states_.push_back(std::move(s));
  return states_.back();
}

void FreezeAwareAdam::zero_grad(ParamRegistry& registry) const {
  for (auto& g : registry.groups())
    for (auto& t : g.tensors)
      if (t.grad().defined()) t.mutable_grad() = torch::Tensor();
}

void FreezeAwareAdam::step(ParamRegistry& registry) {
  torch::NoGradGuard guard;
  for (auto& g : registry.groups()) {
    if (g.frozen) continue;
    bool any_grad = false;
    for (const auto& t : g.tensors) any_grad |= t.grad().defined();
    if (!any_grad) continue;
    auto& s = state_for(g);
    s.step += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < g.tensors.size(); ++i) {
      auto& p = g.tensors[i];
      const auto& grad = p.grad();
      if (!grad.defined()) continue;
      s.m[i].mul_(cfg_.beta1).add_(grad, 1.0 - cfg_.beta1);
      s.v[i].mul_(cfg_.beta2).addcmul_(grad, grad, 1.0 - cfg_.beta2);
      const auto denom = (s.v[i] / bc2).sqrt_().add_(cfg_.eps);
      p.addcdiv_(s.m[i], denom, -cfg_.lr / bc1);
    }
  }
}

std::int64_t FreezeAwareAdam::steps(const std::string& group) const {
  for (const auto& s : states_)
    if (s.name == group) return s.step;
  return 0;
}

nlohmann::json FreezeAwareAdam::save(
    const std::string& prefix,
    std::vector<std::pair<std::string, torch::Tensor>>& tensors) const {
  nlohmann::json j;
  j["config"] = {{"lr", cfg_.lr}, {"beta1", cfg_.beta1}, {"beta2", cfg_.beta2}, {"eps", cfg_.eps}};
  j["groups"] = nlohmann::json::array();
  for (const auto& s : states_) {
    j["groups"].push_back({{"name", s.name}, {"step", s.step}, {"count", s.m.size()}});
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      tensors.emplace_back(prefix + s.name + "/m" + std::to_string(i), s.m[i]);
      tensors.emplace_back(prefix + s.name + "/v" + std::to_string(i), s.v[i]);
    }
  }
  return j;
}

void FreezeAwareAdam::load(const nlohmann::json& meta, const std::string& prefix,
                           const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
  auto find = [&](const std::string& name) -> const torch::Tensor& {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw IoError("optimizer tensor missing: " + name);
  };
  const auto& c = meta.at("config");
  cfg_ = {c.at("lr"), c.at("beta1"), c.at("beta2"), c.at("eps")};
  states_.clear();
  for (const auto& g : meta.at("groups")) {
    GroupState s;
    s.name = g.at("name").get<std::string>();
    s.step = g.at("step").get<std::int64_t>();
    const auto count = g.at("count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i) {
      s.m.push_back(find(prefix + s.name + "/m" + std::to_string(i)).clone());
      s.v.push_back(find(prefix + s.name + "/v" + std::to_string(i)).clone());
    }
    states_.push_back(std::move(s));
  }
}

}  // namespace gansfer::nn
