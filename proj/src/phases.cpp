#include "gansfer/phases.hpp"

#include <algorithm>
#include <iostream>

#include <torch/torch.h>

#include "gansfer/checkpoint.hpp"
#include "gansfer/errors.hpp"

namespace gansfer::phases {

namespace {

// Streams for derive_seed.
constexpr std::uint64_t kGeneratorSeed = 1;
constexpr std::uint64_t kJointSeed = 2;
constexpr std::uint64_t kTrainRngSeed = 3;
constexpr std::uint64_t kImageCriticSeed = 4;
constexpr std::uint64_t kSegCriticSeed = 5;
constexpr std::uint64_t kSelfTeachSeed = 6;
constexpr std::uint64_t kMultiGanSeed = 100;

// Loss traces keep one entry every kTraceEvery generator updates.
constexpr int kTraceEvery = 10;

void require_images(const torch::Tensor& t, int channels, int resolution, const char* what) {
  if (t.dim() != 4 || t.size(0) == 0) throw EmptyPool(std::string(what) + " is empty");
  if (t.size(1) != channels)
    throw DimensionMismatch(std::string(what) + " must have " + std::to_string(channels) +
                            " channels");
  if (t.size(2) != resolution || t.size(3) != resolution)
    throw ShapeMismatch(std::string(what) + " resolution differs from the GAN target");
}

bool is_output_layer(const std::string& name) { return name.rfind("to_out", 0) == 0; }

int block_index(const std::string& name) { return std::stoi(name.substr(5)); }

void log_progress(const GansferConfig& cfg, const char* phase, std::int64_t update,
                  std::int64_t images, const gan::StepMetrics& m) {
  if (cfg.log_every <= 0 || update % cfg.log_every) return;
  std::clog << "[" << phase << "] update " << update << " images " << images << " g_loss "
            << m.generator_loss;
  for (double w : m.wasserstein) std::clog << " w " << w;
  std::clog << "\n";
}

}  // namespace

// --- config ------------------------------------------------------------------

void GansferConfig::validate() const {
  arch.doublings();
  train.validate();
  if (p1.fade_images < 0 || p1.stable_images < 0) throw ConfigError("p1 budgets must be >= 0");
  if (p2.images < 0 || p2.warmup_cycles < 0) throw ConfigError("p2 budgets must be >= 0");
  if (p2.warmup_ratio < 1) throw ConfigError("p2 warmup_ratio must be >= 1");
  if (p2.frozen_blocks < 1 || p2.frozen_blocks > arch.doublings() + 1)
    throw ConfigError("p2 frozen_blocks must lie in [1, stages]");
  if (p3.images < 0) throw ConfigError("p3 images must be >= 0");
  if (p3.unfreeze_budget <= 0) throw ConfigError("p3 unfreeze_budget must be positive");
  if (p3.image_weight < 0 || p3.seg_weight < 0) throw ConfigError("critic weights must be >= 0");
  if (p3.selfteach_multiplier < 1) throw ConfigError("selfteach_multiplier must be >= 1");
}

nlohmann::json GansferConfig::to_json() const {
  return {{"arch", arch.to_json()},
          {"train", train.to_json()},
          {"p1", {{"fade_images", p1.fade_images}, {"stable_images", p1.stable_images}}},
          {"p2",
           {{"images", p2.images},
            {"warmup_cycles", p2.warmup_cycles},
            {"warmup_ratio", p2.warmup_ratio},
            {"frozen_blocks", p2.frozen_blocks}}},
          {"p3",
           {{"images", p3.images},
            {"unfreeze_budget", p3.unfreeze_budget},
            {"image_weight", p3.image_weight},
            {"seg_weight", p3.seg_weight},
            {"selfteach_multiplier", p3.selfteach_multiplier}}},
          {"log_every", log_every}};
}

GansferConfig GansferConfig::from_json(const nlohmann::json& j) {
  GansferConfig c;
  if (j.contains("arch")) c.arch = gan::GanArch::from_json(j["arch"]);
  if (j.contains("train")) c.train = gan::GanTrainConfig::from_json(j["train"]);
  if (j.contains("p1")) {
    const auto& p = j["p1"];
    c.p1.fade_images = p.value("fade_images", c.p1.fade_images);
    c.p1.stable_images = p.value("stable_images", c.p1.stable_images);
  }
  if (j.contains("p2")) {
    const auto& p = j["p2"];
    c.p2.images = p.value("images", c.p2.images);
    c.p2.warmup_cycles = p.value("warmup_cycles", c.p2.warmup_cycles);
    c.p2.warmup_ratio = p.value("warmup_ratio", c.p2.warmup_ratio);
    c.p2.frozen_blocks = p.value("frozen_blocks", c.p2.frozen_blocks);
  }
  if (j.contains("p3")) {
    const auto& p = j["p3"];
    c.p3.images = p.value("images", c.p3.images);
    c.p3.unfreeze_budget = p.value("unfreeze_budget", c.p3.unfreeze_budget);
    c.p3.image_weight = p.value("image_weight", c.p3.image_weight);
    c.p3.seg_weight = p.value("seg_weight", c.p3.seg_weight);
    c.p3.selfteach_multiplier = p.value("selfteach_multiplier", c.p3.selfteach_multiplier);
  }
  c.log_every = j.value("log_every", c.log_every);
  c.validate();
  return c;
}

// --- state persistence -------------------------------------------------------

void save_state(const PhaseState& state, const std::filesystem::path& path) {
  Checkpoint ck;
  state.generator.save(ck, "g/");
  ck.meta["phase"] = static_cast<int>(state.phase);
  ck.meta["frozen_layers"] = state.frozen_layers;
  ck.meta["rng"] = state.rng.serialize();
  ck.meta["metrics"] = state.metrics;
  auto& sched = ck.meta["unfreeze_schedule"] = nlohmann::json::array();
  for (const auto& s : state.unfreeze_schedule)
    sched.push_back({{"image_budget", s.image_budget}, {"layers", s.layers}});
  ck.meta["g_opt"] = state.g_opt.save("g_opt/", ck.tensors);
  const std::pair<const char*, const std::unique_ptr<gan::CriticNet>*> critics[] = {
      {"joint", &state.joint}, {"d_image", &state.d_image}, {"d_seg", &state.d_seg}};
  const nn::FreezeAwareAdam* opts[] = {&state.joint_opt, &state.d_image_opt, &state.d_seg_opt};
  for (int i = 0; i < 3; ++i) {
    const std::string name = critics[i].first;
    if (!*critics[i].second) continue;
    (*critics[i].second)->save(ck, name + "/");
    ck.meta[name + "_opt"] = opts[i]->save(name + "_opt/", ck.tensors);
  }
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  ck.save(path);
}

PhaseState load_state(const std::filesystem::path& path) {
  const auto ck = Checkpoint::load(path);
  PhaseState st(gan::GeneratorNet::load(ck, "g/"));
  st.phase = static_cast<Phase>(ck.meta.at("phase").get<int>());
  st.frozen_layers = ck.meta.at("frozen_layers").get<nn::LayerSelector>();
  st.rng.deserialize(ck.meta.at("rng").get<std::string>());
  st.metrics = ck.meta.at("metrics");
  for (const auto& s : ck.meta.at("unfreeze_schedule"))
    st.unfreeze_schedule.push_back(
        {s.at("image_budget").get<std::int64_t>(), s.at("layers").get<nn::LayerSelector>()});
  st.g_opt.load(ck.meta.at("g_opt"), "g_opt/", ck.tensors);
  std::pair<const char*, std::unique_ptr<gan::CriticNet>*> critics[] = {
      {"joint", &st.joint}, {"d_image", &st.d_image}, {"d_seg", &st.d_seg}};
  nn::FreezeAwareAdam* opts[] = {&st.joint_opt, &st.d_image_opt, &st.d_seg_opt};
  for (int i = 0; i < 3; ++i) {
    const std::string name = critics[i].first;
    if (!ck.meta.contains(name + "/")) continue;
    *critics[i].second =
        std::make_unique<gan::CriticNet>(gan::CriticNet::load(ck, name + "/"));
    opts[i]->load(ck.meta.at(name + "_opt"), name + "_opt/", ck.tensors);
  }
  return st;
}

// --- tensors -----------------------------------------------------------------

torch::Tensor slices_to_tensor(const std::vector<data::MultiChannelSlice>& slices,
                               torch::Dtype dtype) {
  if (slices.empty()) return torch::empty({0, data::kNumGanChannels, 0, 0}, dtype);
  const int w = slices.front().width(), h = slices.front().height();
  const int c = static_cast<int>(slices.front().channels.size());
  auto out = torch::empty({static_cast<std::int64_t>(slices.size()), c, h, w}, torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  for (const auto& s : slices) {
    if (static_cast<int>(s.channels.size()) != c || s.width() != w || s.height() != h)
      throw ShapeMismatch("slices differ in shape");
    for (const auto& ch : s.channels) dst = std::copy(ch.values().begin(), ch.values().end(), dst);
  }
  return out.to(dtype);
}

torch::Tensor images_to_tensor(const std::vector<Image>& images, torch::Dtype dtype) {
  if (images.empty()) return torch::empty({0, 1, 0, 0}, dtype);
  const int w = images.front().width(), h = images.front().height();
  auto out = torch::empty({static_cast<std::int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  for (const auto& img : images) {
    if (img.width() != w || img.height() != h) throw ShapeMismatch("images differ in shape");
    dst = std::copy(img.values().begin(), img.values().end(), dst);
  }
  return out.to(dtype);
}

// --- phase 1 -----------------------------------------------------------------

PhaseState run_phase1(const torch::Tensor& labelled, const GansferConfig& cfg) {
  cfg.validate();
  require_images(labelled, data::kNumGanChannels, cfg.arch.target_res, "labelled set");
  const auto seed = cfg.train.seed;
  PhaseState st(gan::GeneratorNet(cfg.arch, data::kNumGanChannels,
                                  derive_seed(seed, kGeneratorSeed)));
  st.joint = std::make_unique<gan::CriticNet>(cfg.arch, data::kNumGanChannels,
                                              derive_seed(seed, kJointSeed));
  st.rng = Rng(derive_seed(seed, kTrainRngSeed));
  st.g_opt = nn::FreezeAwareAdam(cfg.train.generator_adam);
  st.joint_opt = nn::FreezeAwareAdam(cfg.train.critic_adam);

  gan::TensorPool pool(labelled.to(cfg.arch.dtype));
  auto& g = st.generator;
  auto& d = *st.joint;
  const int batch = cfg.train.batch_size;
  nlohmann::json stages = nlohmann::json::array();
  nlohmann::json trace = nlohmann::json::array();
  std::int64_t update = 0, total_images = 0;

  const int n_stages = cfg.arch.doublings() + 1;
  for (int stage = 0; stage < n_stages; ++stage) {
    if (stage > 0) {
      g.grow();
      d.grow();
    }
    const std::int64_t fade = stage > 0 ? cfg.p1.fade_images : 0;
    const std::int64_t budget = fade + cfg.p1.stable_images;
    std::int64_t images = 0;
    gan::StepMetrics m;
    while (images < budget) {
      const double alpha = images < fade ? static_cast<double>(images) / fade : 1.0;
      g.set_alpha(alpha);
      d.set_alpha(alpha);
      m = gan::train_step(g, d, st.g_opt, st.joint_opt, pool, cfg.train, st.rng);
      images += batch;
      total_images += batch;
      if (update % kTraceEvery == 0)
        trace.push_back({update, stage, m.generator_loss, m.wasserstein.at(0)});
      ++update;
      log_progress(cfg, "p1", update, total_images, m);
    }
    g.set_alpha(1.0);
    d.set_alpha(1.0);
    stages.push_back({{"stage", stage},
                      {"resolution", g.resolution()},
                      {"images", images},
                      {"generator_loss", m.generator_loss},
                      {"wasserstein", m.wasserstein.empty() ? 0.0 : m.wasserstein[0]}});
  }
  st.phase = Phase::kP1;
  st.metrics["p1"] = {{"stages", stages},
                      {"generator_updates", update},
                      {"images", total_images},
                      {"trace_columns", {"update", "stage", "generator_loss", "wasserstein"}},
                      {"trace", trace}};
  return st;
}

// --- phase 2 -----------------------------------------------------------------

nn::LayerSelector phase2_frozen_layers(const gan::GeneratorNet& g, int frozen_blocks) {
  if (frozen_blocks < 1 || frozen_blocks > g.stage() + 1)
    throw ConfigError("frozen_blocks must lie in [1, stages]");
  nn::LayerSelector out;
  for (int k = g.stage() - frozen_blocks + 1; k <= g.stage(); ++k)
    out.push_back(g.block_name(k));
  for (int k = 0; k <= g.stage(); ++k) out.push_back(g.output_name(k));
  return out;
}

void run_phase2(PhaseState& st, const torch::Tensor& unlabelled_mr, const GansferConfig& cfg) {
  cfg.validate();
  if (st.phase != Phase::kP1) throw PhaseOrderError("phase 2 requires a completed phase 1");
  auto& g = st.generator;
  if (!g.at_target() || g.alpha() < 1.0)
    throw PhaseOrderError("phase 2 requires a fully grown generator");
  require_images(unlabelled_mr, 1, g.resolution(), "unlabelled set");

  st.frozen_layers = phase2_frozen_layers(g, cfg.p2.frozen_blocks);
  g.params().set_trainable(st.frozen_layers, false);
  const auto entry = nn::ParamSnapshot::take(g.params());

  st.joint.reset();
  st.d_image = std::make_unique<gan::CriticNet>(g.arch(), 1,
                                                derive_seed(cfg.train.seed, kImageCriticSeed));
  st.d_image->grow_to(g.stage());
  st.d_image_opt = nn::FreezeAwareAdam(cfg.train.critic_adam);

  gan::TensorPool pool(unlabelled_mr.to(g.arch().dtype));
  std::vector<gan::CriticHead> heads{
      {"image", st.d_image.get(), &st.d_image_opt, &pool, 0, 1, 1.0}};

  std::vector<int> ratios;
  nlohmann::json trace = nlohmann::json::array();
  std::int64_t images = 0, update = 0, critic_total = 0;
  while (images < cfg.p2.images) {
    const int ratio = update < cfg.p2.warmup_cycles ? cfg.p2.warmup_ratio
                                                    : cfg.train.critic_updates_per_gen;
    const auto m = gan::train_step(g, st.g_opt, heads, ratio, cfg.train, st.rng);
    ratios.push_back(m.critic_updates);
    critic_total += m.critic_updates;
    images += cfg.train.batch_size;
    if (update % kTraceEvery == 0) trace.push_back({update, m.generator_loss, m.wasserstein[0]});
    ++update;
    log_progress(cfg, "p2", update, images, m);
  }

  nlohmann::json audit = nlohmann::json::object();
  for (const auto& name : st.frozen_layers)
    audit[name] = entry.group_max_abs_diff(g.params(), name);
  st.phase = Phase::kP2;
  st.metrics["p2"] = {{"generator_updates", update},
                      {"critic_updates", critic_total},
                      {"images", images},
                      {"critic_updates_per_generator_update", ratios},
                      {"frozen_layers", st.frozen_layers},
                      {"frozen_max_abs_diff", audit},
                      {"trace_columns", {"update", "generator_loss", "wasserstein"}},
                      {"trace", trace}};
}

// --- self-teach set ----------------------------------------------------------

SelfTeachSet::SelfTeachSet(torch::Tensor real_seg, torch::Tensor synthetic_seg)
    : real_(std::move(real_seg)), synthetic_(std::move(synthetic_seg)) {
  if (real_.dim() != 4 || real_.size(0) == 0) throw EmptyPool("self-teach set has no real samples");
  if (synthetic_.dim() != 4 || synthetic_.size(0) == 0)
    throw EmptyPool("self-teach set has no synthetic samples");
  if (real_.size(1) != data::kNumStructures || synthetic_.size(1) != data::kNumStructures)
    throw DimensionMismatch("self-teach samples must have 7 segmentation channels");
  if (!real_.sizes().slice(1).equals(synthetic_.sizes().slice(1)))
    throw ShapeMismatch("real and synthetic self-teach samples differ in shape");
}

std::vector<std::int64_t> SelfTeachSet::epoch_order(Rng& rng) const {
  const std::int64_t n_real = real_.size(0);
  const std::int64_t n_syn = synthetic_.size(0);
  std::vector<std::int64_t> order;
  order.reserve(2 * n_real);
  for (std::int64_t i = 0; i < n_real; ++i) order.push_back(i);
  // Synthetic entries without replacement; a pool smaller than the real set
  // is reshuffled and reused.
  std::vector<std::int64_t> synth(n_syn);
  std::int64_t taken = 0;
  while (taken < n_real) {
    for (std::int64_t i = 0; i < n_syn; ++i) synth[i] = n_real + i;
    for (std::size_t i = synth.size(); i > 1; --i) std::swap(synth[i - 1], synth[rng.below(i)]);
    for (std::int64_t i = 0; i < n_syn && taken < n_real; ++i, ++taken) order.push_back(synth[i]);
  }
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

torch::Tensor SelfTeachSet::sample(int batch, int resolution, double alpha, Rng& rng) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> picked;
  picked.reserve(batch);
  const std::int64_t n_real = real_.size(0);
  for (int b = 0; b < batch; ++b) {
    if (cursor_ >= queue_.size()) {
      queue_ = epoch_order(rng);
      cursor_ = 0;
    }
    const auto idx = queue_[cursor_++];
    if (idx < n_real) {
      picked.push_back(real_[idx]);
      ++real_served_;
    } else {
      picked.push_back(synthetic_[idx - n_real]);
      ++synthetic_served_;
    }
  }
  auto x = torch::stack(picked);
  if (resolution != x.size(2)) x = torch::avg_pool2d(x, x.size(2) / resolution);
  if (alpha < 1.0) x = torch::lerp(nn::upsample2x(nn::downsample2x(x)), x, alpha);
  return x;
}

SelfTeachSet build_selfteach_set(PhaseState& st, const torch::Tensor& labelled,
                                 const GansferConfig& cfg) {
  if (st.phase != Phase::kP2) throw PhaseOrderError("self-teach set requires a completed phase 2");
  auto& g = st.generator;
  require_images(labelled, data::kNumGanChannels, g.resolution(), "labelled set");
  const auto dtype = g.arch().dtype;
  const std::int64_t n = labelled.size(0) * cfg.p3.selfteach_multiplier;
  Rng rng(derive_seed(cfg.train.seed, kSelfTeachSeed));
  std::vector<torch::Tensor> parts;
  torch::NoGradGuard guard;
  for (std::int64_t done = 0; done < n;) {
    const int b = static_cast<int>(std::min<std::int64_t>(64, n - done));
    const auto z = gan::sample_latents(b, g.arch().latent_dim, rng, dtype);
    parts.push_back(gan::select_channels(g.generate(z), 1, data::kNumStructures).clone());
    done += b;
  }
  return SelfTeachSet(labelled.narrow(1, 1, data::kNumStructures).to(dtype).clone(),
                      torch::cat(parts));
}

// --- phase 3 -----------------------------------------------------------------

std::vector<UnfreezeStep> make_unfreeze_schedule(const PhaseState& st,
                                                 std::int64_t unfreeze_budget) {
  std::vector<int> blocks;
  for (const auto& name : st.frozen_layers)
    if (name.rfind("block", 0) == 0) blocks.push_back(block_index(name));
  std::sort(blocks.begin(), blocks.end());
  std::vector<UnfreezeStep> out;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    out.push_back({static_cast<std::int64_t>(i + 1) * unfreeze_budget,
                   {st.generator.block_name(blocks[i])}});
  return out;
}

void validate_schedule(const gan::GeneratorNet& g, const std::vector<UnfreezeStep>& schedule) {
  for (const auto& step : schedule)
    for (const auto& name : step.layers) {
      if (name == "*" || is_output_layer(name))
        throw ScheduleExhaustsFinalLayer("unfreeze schedule releases output layer '" + name + "'");
      if (!g.params().has(name)) throw UnknownLayer("unfreeze schedule names unknown layer " + name);
    }
}

void run_phase3(PhaseState& st, const torch::Tensor& unlabelled_mr, SelfTeachSet& selfteach,
                const GansferConfig& cfg) {
  cfg.validate();
  if (st.phase != Phase::kP2 || !st.d_image)
    throw PhaseOrderError("phase 3 requires a completed phase 2");
  auto& g = st.generator;
  require_images(unlabelled_mr, 1, g.resolution(), "unlabelled set");
  if (st.unfreeze_schedule.empty())
    st.unfreeze_schedule = make_unfreeze_schedule(st, cfg.p3.unfreeze_budget);
  validate_schedule(g, st.unfreeze_schedule);

  st.d_seg = std::make_unique<gan::CriticNet>(g.arch(), data::kNumStructures,
                                              derive_seed(cfg.train.seed, kSegCriticSeed));
  st.d_seg->grow_to(g.stage());
  st.d_seg_opt = nn::FreezeAwareAdam(cfg.train.critic_adam);

  gan::TensorPool pool(unlabelled_mr.to(g.arch().dtype));
  std::vector<gan::CriticHead> heads{
      {"image", st.d_image.get(), &st.d_image_opt, &pool, 0, 1, cfg.p3.image_weight},
      {"seg", st.d_seg.get(), &st.d_seg_opt, &selfteach, 1, data::kNumStructures,
       cfg.p3.seg_weight}};

  const auto entry = nn::ParamSnapshot::take(g.params());
  std::vector<std::string> watched;
  for (const auto& name : g.params().frozen()) watched.push_back(name);
  nlohmann::json first_change = nlohmann::json::object();
  nlohmann::json releases = nlohmann::json::array();
  std::vector<bool> applied(st.unfreeze_schedule.size(), false);

  nlohmann::json trace = nlohmann::json::array();
  std::int64_t images = 0, update = 0;
  while (images < cfg.p3.images) {
    for (std::size_t i = 0; i < st.unfreeze_schedule.size(); ++i) {
      if (applied[i] || images < st.unfreeze_schedule[i].image_budget) continue;
      g.params().set_trainable(st.unfreeze_schedule[i].layers, true);
      applied[i] = true;
      releases.push_back({{"images", images},
                          {"update", update},
                          {"layers", st.unfreeze_schedule[i].layers},
                          {"trainable", g.params().parameter_count()},
                          {"frozen", g.params().frozen()}});
    }
    const auto m =
        gan::train_step(g, st.g_opt, heads, cfg.train.critic_updates_per_gen, cfg.train, st.rng);
    for (const auto& name : watched)
      if (!first_change.contains(name) && !entry.group_equal(g.params(), name))
        first_change[name] = images;
    images += cfg.train.batch_size;
    if (update % kTraceEvery == 0)
      trace.push_back({update, m.generator_loss, m.wasserstein[0], m.wasserstein[1]});
    ++update;
    log_progress(cfg, "p3", update, images, m);
  }

  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& s : st.unfreeze_schedule)
    schedule.push_back({{"image_budget", s.image_budget}, {"layers", s.layers}});
  nlohmann::json output_audit = nlohmann::json::object();
  for (int k = 0; k <= g.stage(); ++k)
    output_audit[g.output_name(k)] = entry.group_max_abs_diff(g.params(), g.output_name(k));
  st.frozen_layers = g.params().frozen();
  st.phase = Phase::kP3;
  st.metrics["p3"] = {{"generator_updates", update},
                      {"images", images},
                      {"schedule", schedule},
                      {"releases", releases},
                      {"first_change_images", first_change},
                      {"output_max_abs_diff", output_audit},
                      {"selfteach_real_served", selfteach.real_served()},
                      {"selfteach_synthetic_served", selfteach.synthetic_served()},
                      {"trace_columns",
                       {"update", "generator_loss", "wasserstein_image", "wasserstein_seg"}},
                      {"trace", trace}};
}

// --- full runs ---------------------------------------------------------------

GansferRun run_gansfer(const torch::Tensor& labelled, const torch::Tensor& unlabelled_mr,
                       const GansferConfig& cfg,
                       const std::optional<std::filesystem::path>& dir) {
  auto ckpt = [&](const char* name) { return *dir / name; };
  auto cached = [&](const char* name) { return dir && std::filesystem::exists(ckpt(name)); };

  auto st = cached("p1.ckpt") ? load_state(ckpt("p1.ckpt")) : run_phase1(labelled, cfg);
  if (dir && !cached("p1.ckpt")) save_state(st, ckpt("p1.ckpt"));
  auto p1 = st.generator.clone();

  if (cached("p2.ckpt")) {
    st = load_state(ckpt("p2.ckpt"));
  } else {
    run_phase2(st, unlabelled_mr, cfg);
    if (dir) save_state(st, ckpt("p2.ckpt"));
  }
  auto p2 = st.generator.clone();

  if (cached("p3.ckpt")) {
    st = load_state(ckpt("p3.ckpt"));
  } else {
    auto selfteach = build_selfteach_set(st, labelled, cfg);
    run_phase3(st, unlabelled_mr, selfteach, cfg);
    if (dir) save_state(st, ckpt("p3.ckpt"));
  }
  return GansferRun{{}, std::move(p1), std::move(p2), st.generator.clone(), st.metrics};
}

std::vector<std::vector<std::size_t>> multi_gan_groups(std::size_t n_labelled) {
  if (n_labelled != 12 && n_labelled != 24)
    throw BadBudget("multi-GAN training needs 12 or 24 labelled subjects, got " +
                    std::to_string(n_labelled));
  std::vector<std::vector<std::size_t>> groups(n_labelled / 6);
  for (std::size_t i = 0; i < n_labelled; ++i) groups[i / 6].push_back(i);
  return groups;
}

std::vector<GansferRun> run_multi_gan(const std::vector<data::LabelledSample>& labelled,
                                      const torch::Tensor& unlabelled_mr,
                                      const GansferConfig& cfg,
                                      const std::optional<std::filesystem::path>& root) {
  const auto groups = multi_gan_groups(labelled.size());
  std::vector<GansferRun> runs;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<data::MultiChannelSlice> slices;
    std::vector<std::string> ids;
    for (auto idx : groups[gi]) {
      auto s = data::to_gan_slices(labelled[idx]);
      slices.insert(slices.end(), s.begin(), s.end());
      ids.push_back(labelled[idx].subject_id);
    }
    auto group_cfg = cfg;
    group_cfg.train.seed = derive_seed(cfg.train.seed, kMultiGanSeed + gi);
    std::optional<std::filesystem::path> dir;
    if (root) dir = *root / ("gan" + std::to_string(gi));
    auto run = run_gansfer(slices_to_tensor(slices, cfg.arch.dtype), unlabelled_mr, group_cfg, dir);
    run.group = ids;
    runs.push_back(std::move(run));
  }
  return runs;
}

double sample_diversity(const gan::GeneratorNet& g, int n, std::uint64_t seed) {
  if (n < 2) throw BadCount("diversity needs at least two samples");
  torch::NoGradGuard guard;
  Rng rng(seed);
  std::vector<torch::Tensor> parts;
  for (int done = 0; done < n;) {
    const int b = std::min(64, n - done);
    const auto z = gan::sample_latents(b, g.arch().latent_dim, rng, g.arch().dtype);
    parts.push_back(g.generate(z).narrow(1, 0, 1).flatten(1).to(torch::kFloat64));
    done += b;
  }
  return torch::pdist(torch::cat(parts)).mean().item<double>();
}

}  // namespace gansfer::phases
