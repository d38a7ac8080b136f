#include "gansfer/gan_core.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "gansfer/errors.hpp"

namespace gansfer::gan {

namespace {

const double kSqrt2 = std::sqrt(2.0);

std::string dtype_tag(torch::Dtype d) { return d == torch::kFloat64 ? "f64" : "f32"; }
torch::Dtype dtype_of(const std::string& s) {
  return s == "f64" ? torch::kFloat64 : torch::kFloat32;
}

void copy_params(nn::ParamRegistry& dst, const Checkpoint& ck, const std::string& prefix) {
  torch::NoGradGuard guard;
  for (auto& g : dst.groups())
    for (std::size_t i = 0; i < g.tensors.size(); ++i) {
      const auto& src = ck.tensor(prefix + g.name + "/" + std::to_string(i));
      if (!src.sizes().equals(g.tensors[i].sizes()))
        throw IoError("checkpoint tensor shape mismatch for " + g.name);
      g.tensors[i].copy_(src);
    }
}

void write_params(const nn::ParamRegistry& reg, Checkpoint& ck, const std::string& prefix) {
  for (const auto& g : reg.groups())
    for (std::size_t i = 0; i < g.tensors.size(); ++i)
      ck.add(prefix + g.name + "/" + std::to_string(i), g.tensors[i].detach().clone());
}

torch::Tensor minibatch_stddev(const torch::Tensor& h) {
  const auto centered = h - h.mean(0, true);
  const auto s = (centered.pow(2).mean(0) + 1e-8).sqrt().mean();
  const auto channel = s.expand({h.size(0), 1, h.size(2), h.size(3)});
  return torch::cat({h, channel}, 1);
}

}  // namespace

// --- GanArch -----------------------------------------------------------------

int GanArch::channels(int stage) const {
  return std::clamp(fmap_base >> stage, min_channels, max_channels);
}

int GanArch::doublings() const {
  if (base_res <= 0 || target_res < base_res || target_res % base_res != 0)
    throw NonDyadic("target resolution must be base resolution * 2^k");
  const int ratio = target_res / base_res;
  if (ratio & (ratio - 1)) throw NonDyadic("target resolution must be base resolution * 2^k");
  int k = 0;
  while ((1 << k) < ratio) ++k;
  return k;
}

nlohmann::json GanArch::to_json() const {
  return {{"latent_dim", latent_dim},     {"base_res", base_res},
          {"target_res", target_res},     {"fmap_base", fmap_base},
          {"min_channels", min_channels}, {"max_channels", max_channels},
          {"minibatch_stddev", minibatch_stddev}, {"dtype", dtype_tag(dtype)}};
}

GanArch GanArch::from_json(const nlohmann::json& j) {
  GanArch a;
  a.latent_dim = j.value("latent_dim", a.latent_dim);
  a.base_res = j.value("base_res", a.base_res);
  a.target_res = j.value("target_res", a.target_res);
  a.fmap_base = j.value("fmap_base", a.fmap_base);
  a.min_channels = j.value("min_channels", a.min_channels);
  a.max_channels = j.value("max_channels", a.max_channels);
  a.minibatch_stddev = j.value("minibatch_stddev", a.minibatch_stddev);
  a.dtype = dtype_of(j.value("dtype", std::string("f32")));
  return a;
}

// --- GeneratorNet ------------------------------------------------------------

GeneratorNet::GeneratorNet(const GanArch& arch, int out_channels, std::uint64_t seed)
    : arch_(arch), out_channels_(out_channels), init_rng_(seed) {
  arch_.doublings();
  if (out_channels <= 0) throw DimensionMismatch("generator needs at least one output channel");
  add_stage();
}

void GeneratorNet::add_stage() {
  const int k = static_cast<int>(blocks_.size());
  const int c = arch_.channels(k);
  auto& group = params_.add(block_name(k));
  Block b;
  if (k == 0) {
    const int res = arch_.base_res;
    b.has_dense = true;
    b.dense = nn::EqLinear::create(group, arch_.latent_dim, c * res * res, kSqrt2 / 4.0,
                                   init_rng_, arch_.dtype);
    b.conv1 = nn::EqConv2d::create(group, c, c, 3, kSqrt2, init_rng_, arch_.dtype);
  } else {
    b.conv1 = nn::EqConv2d::create(group, arch_.channels(k - 1), c, 3, kSqrt2, init_rng_,
                                   arch_.dtype);
    b.conv2 = nn::EqConv2d::create(group, c, c, 3, kSqrt2, init_rng_, arch_.dtype);
  }
  blocks_.push_back(std::move(b));
  auto& out_group = params_.add(output_name(k));
  to_out_.push_back(
      nn::EqConv2d::create(out_group, c, out_channels_, 1, 1.0, init_rng_, arch_.dtype));
  params_.sync_requires_grad();
}

torch::Tensor GeneratorNet::run_block(int k, const torch::Tensor& x) const {
  const auto& b = blocks_[k];
  if (k == 0) {
    const int res = arch_.base_res;
    auto h = b.dense.forward(nn::pixel_norm(x)).view({x.size(0), arch_.channels(0), res, res});
    h = nn::pixel_norm(nn::lrelu(h));
    return nn::pixel_norm(nn::lrelu(b.conv1.forward(h)));
  }
  auto h = nn::upsample2x(x);
  h = nn::pixel_norm(nn::lrelu(b.conv1.forward(h)));
  return nn::pixel_norm(nn::lrelu(b.conv2.forward(h)));
}

torch::Tensor GeneratorNet::features(const torch::Tensor& z, int stage) const {
  if (z.dim() != 2 || z.size(1) != arch_.latent_dim)
    throw DimensionMismatch("latent batch must have shape (N, latent_dim)");
  if (stage < 0 || stage > this->stage()) throw UnknownLayer("no such generator stage");
  auto h = run_block(0, z);
  for (int k = 1; k <= stage; ++k) h = run_block(k, h);
  return h;
}

torch::Tensor GeneratorNet::to_output(int stage, const torch::Tensor& features) const {
  return to_out_.at(stage).forward(features);
}

torch::Tensor GeneratorNet::generate(const torch::Tensor& z) const {
  if (z.dim() != 2 || z.size(1) != arch_.latent_dim)
    throw DimensionMismatch("latent batch must have shape (N, latent_dim)");
  const int s = stage();
  auto h = run_block(0, z);
  torch::Tensor prev = h;
  for (int k = 1; k <= s; ++k) {
    prev = h;
    h = run_block(k, h);
  }
  auto out = to_out_[s].forward(h);
  if (s > 0 && alpha_ < 1.0) {
    const auto old = nn::upsample2x(to_out_[s - 1].forward(prev));
    out = torch::lerp(old, out, alpha_);
  }
  return out;
}

void GeneratorNet::grow() {
  if (at_target()) throw AlreadyAtTarget("generator already at target resolution");
  add_stage();
  alpha_ = 0.0;
}

void GeneratorNet::set_alpha(double a) { alpha_ = std::clamp(a, 0.0, 1.0); }

nn::LayerSelector GeneratorNet::final_layers() const {
  nn::LayerSelector sel{block_name(stage())};
  for (int k = 0; k <= stage(); ++k) sel.push_back(output_name(k));
  return sel;
}

void GeneratorNet::save(Checkpoint& ck, const std::string& prefix) const {
  ck.meta[prefix] = {{"kind", "generator"},
                     {"arch", arch_.to_json()},
                     {"out_channels", out_channels_},
                     {"stage", stage()},
                     {"alpha", alpha_},
                     {"frozen", params_.frozen()},
                     {"init_rng", init_rng_.serialize()}};
  write_params(params_, ck, prefix);
}

GeneratorNet GeneratorNet::load(const Checkpoint& ck, const std::string& prefix) {
  const auto& m = ck.meta.at(prefix);
  GeneratorNet g(GanArch::from_json(m.at("arch")), m.at("out_channels").get<int>(), 0);
  const int stage = m.at("stage").get<int>();
  while (g.stage() < stage) g.add_stage();
  copy_params(g.params_, ck, prefix);
  g.alpha_ = m.at("alpha").get<double>();
  g.init_rng_.deserialize(m.at("init_rng").get<std::string>());
  for (const auto& name : m.at("frozen")) g.params_.group(name.get<std::string>()).frozen = true;
  g.params_.sync_requires_grad();
  return g;
}

GeneratorNet GeneratorNet::clone() const {
  Checkpoint ck;
  save(ck, "g/");
  return load(ck, "g/");
}

// --- CriticNet ---------------------------------------------------------------

CriticNet::CriticNet(const GanArch& arch, int in_channels, std::uint64_t seed)
    : arch_(arch), in_channels_(in_channels), init_rng_(seed) {
  arch_.doublings();
  if (in_channels <= 0) throw DimensionMismatch("critic needs at least one input channel");
  add_stage();
}

void CriticNet::add_stage() {
  const int k = static_cast<int>(blocks_.size());
  const int c = arch_.channels(k);
  auto& group = params_.add("block" + std::to_string(k));
  Block b;
  if (k == 0) {
    const int res = arch_.base_res;
    const int extra = arch_.minibatch_stddev ? 1 : 0;
    b.conv1 = nn::EqConv2d::create(group, c + extra, c, 3, kSqrt2, init_rng_, arch_.dtype);
    b.dense1 = nn::EqLinear::create(group, c * res * res, c, kSqrt2, init_rng_, arch_.dtype);
    b.dense2 = nn::EqLinear::create(group, c, 1, 1.0, init_rng_, arch_.dtype);
  } else {
    b.conv1 = nn::EqConv2d::create(group, c, c, 3, kSqrt2, init_rng_, arch_.dtype);
    b.conv2 = nn::EqConv2d::create(group, c, arch_.channels(k - 1), 3, kSqrt2, init_rng_,
                                   arch_.dtype);
  }
  blocks_.push_back(std::move(b));
  auto& in_group = params_.add("from_in" + std::to_string(k));
  from_in_.push_back(
      nn::EqConv2d::create(in_group, in_channels_, c, 1, kSqrt2, init_rng_, arch_.dtype));
  params_.sync_requires_grad();
}

torch::Tensor CriticNet::run_block(int k, const torch::Tensor& x) const {
  const auto& b = blocks_[k];
  if (k == 0) {
    auto h = arch_.minibatch_stddev ? minibatch_stddev(x) : x;
    h = nn::lrelu(b.conv1.forward(h));
    h = nn::lrelu(b.dense1.forward(h.flatten(1)));
    return b.dense2.forward(h).view({x.size(0)});
  }
  auto h = nn::lrelu(b.conv1.forward(x));
  h = nn::lrelu(b.conv2.forward(h));
  return nn::downsample2x(h);
}

torch::Tensor CriticNet::score(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != in_channels_)
    throw DimensionMismatch("critic expects " + std::to_string(in_channels_) + " channels");
  if (x.size(2) != resolution() || x.size(3) != resolution())
    throw DimensionMismatch("critic input resolution mismatch");
  const int s = stage();
  torch::Tensor h;
  int next = s;
  if (s > 0 && alpha_ < 1.0) {
    const auto fresh = run_block(s, nn::lrelu(from_in_[s].forward(x)));
    const auto old = nn::lrelu(from_in_[s - 1].forward(nn::downsample2x(x)));
    h = torch::lerp(old, fresh, alpha_);
    next = s - 1;
  } else {
    h = nn::lrelu(from_in_[s].forward(x));
  }
  for (int k = next; k >= 1; --k) h = run_block(k, h);
  return run_block(0, h);
}

void CriticNet::grow() {
  if (stage() >= arch_.doublings()) throw AlreadyAtTarget("critic already at target resolution");
  add_stage();
  alpha_ = 0.0;
}

void CriticNet::grow_to(int stage) {
  while (this->stage() < stage) grow();
  alpha_ = 1.0;
}

void CriticNet::set_alpha(double a) { alpha_ = std::clamp(a, 0.0, 1.0); }

void CriticNet::save(Checkpoint& ck, const std::string& prefix) const {
  ck.meta[prefix] = {{"kind", "critic"},
                     {"arch", arch_.to_json()},
                     {"in_channels", in_channels_},
                     {"stage", stage()},
                     {"alpha", alpha_},
                     {"frozen", params_.frozen()},
                     {"init_rng", init_rng_.serialize()}};
  write_params(params_, ck, prefix);
}

CriticNet CriticNet::load(const Checkpoint& ck, const std::string& prefix) {
  const auto& m = ck.meta.at(prefix);
  CriticNet d(GanArch::from_json(m.at("arch")), m.at("in_channels").get<int>(), 0);
  const int stage = m.at("stage").get<int>();
  while (d.stage() < stage) d.add_stage();
  copy_params(d.params_, ck, prefix);
  d.alpha_ = m.at("alpha").get<double>();
  d.init_rng_.deserialize(m.at("init_rng").get<std::string>());
  for (const auto& name : m.at("frozen")) d.params_.group(name.get<std::string>()).frozen = true;
  d.params_.sync_requires_grad();
  return d;
}

CriticNet CriticNet::clone() const {
  Checkpoint ck;
  save(ck, "d/");
  return load(ck, "d/");
}

GeneratorNet build_generator(int latent_dim, int base_res, int target_res, int out_channels,
                             std::uint64_t seed, GanArch arch) {
  arch.latent_dim = latent_dim;
  arch.base_res = base_res;
  arch.target_res = target_res;
  GeneratorNet g(arch, out_channels, seed);
  while (!g.at_target()) g.grow();
  g.set_alpha(1.0);
  return g;
}

// --- training ----------------------------------------------------------------

void GanTrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (critic_updates_per_gen < 1) throw ConfigError("critic_updates_per_gen must be >= 1");
  if (gp_weight < 0 || drift_weight < 0) throw ConfigError("loss weights must be >= 0");
}

namespace {
nlohmann::json adam_json(const nn::AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}
nn::AdamConfig adam_from(const nlohmann::json& j, nn::AdamConfig a) {
  a.lr = j.value("lr", a.lr);
  a.beta1 = j.value("beta1", a.beta1);
  a.beta2 = j.value("beta2", a.beta2);
  a.eps = j.value("eps", a.eps);
  return a;
}
}  // namespace

nlohmann::json GanTrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"critic_updates_per_gen", critic_updates_per_gen},
          {"gp_weight", gp_weight},
          {"drift_weight", drift_weight},
          {"generator_adam", adam_json(generator_adam)},
          {"critic_adam", adam_json(critic_adam)},
          {"seed", seed}};
}

GanTrainConfig GanTrainConfig::from_json(const nlohmann::json& j) {
  GanTrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.critic_updates_per_gen = j.value("critic_updates_per_gen", c.critic_updates_per_gen);
  c.gp_weight = j.value("gp_weight", c.gp_weight);
  c.drift_weight = j.value("drift_weight", c.drift_weight);
  if (j.contains("generator_adam")) c.generator_adam = adam_from(j["generator_adam"], c.generator_adam);
  if (j.contains("critic_adam")) c.critic_adam = adam_from(j["critic_adam"], c.critic_adam);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

CriticLossParts critic_loss(const CriticFn& critic, const torch::Tensor& real,
                            const torch::Tensor& fake, const torch::Tensor& eps,
                            double gp_weight, double drift_weight) {
  if (!real.sizes().equals(fake.sizes()))
    throw ShapeMismatch("real and fake batches differ in shape");
  const auto d_real = critic(real);
  const auto d_fake = critic(fake);
  const auto wasserstein = d_fake.mean() - d_real.mean();

  auto x_hat = (eps * real.detach() + (1.0 - eps) * fake.detach()).detach().requires_grad_(true);
  const auto d_hat = critic(x_hat);
  auto grads = torch::autograd::grad({d_hat.sum()}, {x_hat}, {}, true, true, true);
  auto g = grads[0].defined() ? grads[0] : torch::zeros_like(x_hat);
  const auto norm = g.flatten(1).norm(2, 1);
  const auto gp = (norm - 1.0).pow(2).mean();
  const auto drift = d_real.pow(2).mean();

  CriticLossParts out;
  out.loss = wasserstein + gp_weight * gp + drift_weight * drift;
  out.wasserstein = wasserstein.item<double>();
  out.gradient_penalty = gp.item<double>();
  out.drift = drift.item<double>();
  return out;
}

CriticLossParts critic_loss(const CriticNet& critic, const torch::Tensor& real,
                            const torch::Tensor& fake, const torch::Tensor& eps,
                            double gp_weight, double drift_weight) {
  return critic_loss([&critic](const torch::Tensor& x) { return critic.score(x); }, real, fake,
                     eps, gp_weight, drift_weight);
}

TensorPool::TensorPool(torch::Tensor images) : full_(std::move(images)) {
  if (full_.dim() != 4 || full_.size(2) != full_.size(3) || full_.size(0) == 0)
    throw ShapeMismatch("tensor pool expects a non-empty (N, C, R, R) stack");
}

torch::Tensor TensorPool::at_resolution(int resolution) const {
  const auto full = full_.size(2);
  if (resolution == full) return full_;
  if (resolution <= 0 || full % resolution) throw ShapeMismatch("pool resolution not a divisor");
  const auto factor = full / resolution;
  return torch::avg_pool2d(full_, factor);
}

torch::Tensor TensorPool::sample(int batch, int resolution, double alpha, Rng& rng) {
  torch::NoGradGuard guard;
  std::vector<std::int64_t> idx(batch);
  for (auto& i : idx) i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(full_.size(0))));
  auto picked = full_.index_select(0, torch::tensor(idx, torch::kInt64));
  const auto full = full_.size(2);
  if (resolution != full) picked = torch::avg_pool2d(picked, full / resolution);
  if (alpha < 1.0 && resolution >= 2) {
    const auto low = nn::upsample2x(nn::downsample2x(picked));
    picked = torch::lerp(low, picked, alpha);
  }
  return picked;
}

torch::Tensor sample_latents(int batch, int latent_dim, Rng& rng, torch::Dtype dtype) {
  return nn::randn({batch, latent_dim}, rng, dtype);
}

torch::Tensor select_channels(const torch::Tensor& x, int first, int count) {
  if (first == 0 && count == x.size(1)) return x;
  return x.narrow(1, first, count);
}

double generator_update(GeneratorNet& g, nn::FreezeAwareAdam& g_opt,
                        std::vector<CriticHead>& heads, const torch::Tensor& z) {
  for (auto& h : heads) h.critic->params().sync_requires_grad(true);
  g.params().sync_requires_grad();
  g_opt.zero_grad(g.params());
  const auto fake = g.generate(z);
  torch::Tensor loss;
  for (auto& h : heads) {
    const auto term =
        -h.critic->score(select_channels(fake, h.first_channel, h.channel_count)).mean();
    loss = loss.defined() ? loss + h.weight * term : h.weight * term;
  }
  if (loss.requires_grad()) {
    loss.backward();
    g_opt.step(g.params());
  }
  g_opt.zero_grad(g.params());
  for (auto& h : heads) h.critic->params().sync_requires_grad();
  return loss.item<double>();
}

StepMetrics train_step(GeneratorNet& g, nn::FreezeAwareAdam& g_opt,
                       std::vector<CriticHead>& heads, int critic_updates,
                       const GanTrainConfig& cfg, Rng& rng) {
  for (const auto& h : heads)
    if (h.critic->resolution() != g.resolution())
      throw DimensionMismatch("generator and critic are at different resolutions");
  StepMetrics m;
  m.critic_loss.assign(heads.size(), 0.0);
  m.wasserstein.assign(heads.size(), 0.0);
  const auto dtype = g.arch().dtype;
  for (int u = 0; u < critic_updates; ++u) {
    for (std::size_t hi = 0; hi < heads.size(); ++hi) {
      auto& h = heads[hi];
      const auto z = sample_latents(cfg.batch_size, g.arch().latent_dim, rng, dtype);
      torch::Tensor fake;
      {
        torch::NoGradGuard guard;
        fake = select_channels(g.generate(z), h.first_channel, h.channel_count);
      }
      const auto real = h.real->sample(cfg.batch_size, g.resolution(), g.alpha(), rng);
      const auto eps = nn::rand_uniform({cfg.batch_size, 1, 1, 1}, rng, dtype);
      h.critic->params().sync_requires_grad();
      h.optimizer->zero_grad(h.critic->params());
      auto parts = critic_loss(*h.critic, real, fake, eps, cfg.gp_weight, cfg.drift_weight);
      if (parts.loss.requires_grad()) {
        parts.loss.backward();
        h.optimizer->step(h.critic->params());
      }
      h.optimizer->zero_grad(h.critic->params());
      m.critic_loss[hi] = parts.loss.item<double>();
      m.wasserstein[hi] = parts.wasserstein;
    }
    ++m.critic_updates;
  }
  const auto z = sample_latents(cfg.batch_size, g.arch().latent_dim, rng, dtype);
  m.generator_loss = generator_update(g, g_opt, heads, z);
  return m;
}

StepMetrics train_step(GeneratorNet& g, CriticNet& d, nn::FreezeAwareAdam& g_opt,
                       nn::FreezeAwareAdam& d_opt, BatchSource& real,
                       const GanTrainConfig& cfg, Rng& rng) {
  std::vector<CriticHead> heads{{"joint", &d, &d_opt, &real, 0, g.out_channels(), 1.0}};
  return train_step(g, g_opt, heads, cfg.critic_updates_per_gen, cfg, rng);
}

}  // namespace gansfer::gan
