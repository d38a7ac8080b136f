#include "gansfer/segmenter.hpp"

#include <cstring>
#include <iostream>

#include "gansfer/checkpoint.hpp"

namespace gansfer::seg {

namespace {

constexpr std::int64_t kIgnore = -100;

torch::nn::Sequential conv_stack(int in, const std::vector<int>& widths) {
  torch::nn::Sequential s;
  for (int w : widths) {
    s->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 3)));
    s->push_back(torch::nn::ReLU());
    in = w;
  }
  return s;
}

}  // namespace

void SegNetConfig::validate(int image_size) const {
  if (n_classes != data::kNumStructures + 1) throw ConfigError("segmenter needs 8 classes");
  if (downsample != 3) throw ConfigError("context downsampling factor must be 3");
  if (segment <= 0 || segment % downsample != 0)
    throw ConfigError("segment side must be a positive multiple of the downsampling factor");
  if (segment % 2 == 0) throw ConfigError("segment side must be odd");
  if (normal_channels.empty() || context_channels.empty())
    throw ConfigError("pathways need at least one layer");
  if (steps <= 0 || batch <= 0 || !(lr > 0)) throw ConfigError("bad training schedule");
  if (foreground_fraction < 0 || foreground_fraction > 1)
    throw ConfigError("foreground fraction outside [0, 1]");
  if (image_size > 0 && normal_input() > image_size)
    throw ConfigError("normal-pathway patch does not fit the image");
}

nlohmann::json SegNetConfig::to_json() const {
  return {{"n_classes", n_classes},
          {"segment", segment},
          {"downsample", downsample},
          {"normal_channels", normal_channels},
          {"context_channels", context_channels},
          {"fc_channels", fc_channels},
          {"steps", steps},
          {"batch", batch},
          {"lr", lr},
          {"reflection_augmentation", reflection_augmentation},
          {"foreground_fraction", foreground_fraction},
          {"seed", seed},
          {"log_every", log_every}};
}

SegNetConfig SegNetConfig::from_json(const nlohmann::json& j) {
  SegNetConfig c;
  c.n_classes = j.value("n_classes", c.n_classes);
  c.segment = j.value("segment", c.segment);
  c.downsample = j.value("downsample", c.downsample);
  c.normal_channels = j.value("normal_channels", c.normal_channels);
  c.context_channels = j.value("context_channels", c.context_channels);
  c.fc_channels = j.value("fc_channels", c.fc_channels);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.reflection_augmentation = j.value("reflection_augmentation", c.reflection_augmentation);
  c.foreground_fraction = j.value("foreground_fraction", c.foreground_fraction);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.validate();
  return c;
}

SegNetImpl::SegNetImpl(const SegNetConfig& cfg) : cfg_(cfg) {
  normal_ = register_module("normal", conv_stack(1, cfg.normal_channels));
  context_ = register_module("context", conv_stack(1, cfg.context_channels));
  head_ = register_module(
      "head", torch::nn::Sequential(
                  torch::nn::Conv2d(torch::nn::Conv2dOptions(
                      cfg.normal_channels.back() + cfg.context_channels.back(), cfg.fc_channels, 1)),
                  torch::nn::ReLU(),
                  torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.fc_channels, cfg.n_classes, 1))));
}

torch::Tensor SegNetImpl::forward(const torch::Tensor& normal, const torch::Tensor& context) {
  const auto a = normal_->forward(normal);
  auto b = context_->forward(torch::avg_pool2d(context, cfg_.downsample, cfg_.downsample));
  b = torch::upsample_nearest2d(b, {b.size(2) * cfg_.downsample, b.size(3) * cfg_.downsample});
  return head_->forward(torch::cat({a, b}, 1));
}

std::vector<SegSample> real_samples(const std::vector<data::LabelledSample>& subjects) {
  std::vector<SegSample> out;
  for (const auto& s : subjects) {
    const auto mr = data::to_mr_slices(s.mr);
    const auto map = data::to_label_map(s.labels);
    for (int z = 0; z < static_cast<int>(mr.size()); ++z) out.push_back({mr[z], map.plane(z)});
  }
  return out;
}

std::vector<SegSample> synthetic_samples(const synth::SyntheticPool& pool) {
  std::vector<SegSample> out;
  for (const auto* s : pool.kept()) out.push_back({s->channels[0], synth::synthetic_label_map(*s)});
  return out;
}

Patch extract_patch(const SegSample& s, int cx, int cy, const SegNetConfig& cfg) {
  const int w = s.mr.width(), h = s.mr.height();
  auto crop = [&](int side) {
    auto t = torch::zeros({1, side, side}, torch::kFloat32);
    auto acc = t.accessor<float, 3>();
    const int half = side / 2;
    for (int j = 0; j < side; ++j)
      for (int i = 0; i < side; ++i) {
        const int x = cx - half + i, y = cy - half + j;
        if (x >= 0 && y >= 0 && x < w && y < h) acc[0][j][i] = s.mr(x, y);
      }
    return t;
  };
  Patch p;
  p.normal = crop(cfg.normal_input());
  p.context = crop(cfg.context_input());
  p.labels = torch::full({cfg.segment, cfg.segment}, kIgnore, torch::kInt64);
  auto acc = p.labels.accessor<std::int64_t, 2>();
  const int half = cfg.segment / 2;
  for (int j = 0; j < cfg.segment; ++j)
    for (int i = 0; i < cfg.segment; ++i) {
      const int x = cx - half + i, y = cy - half + j;
      if (x >= 0 && y >= 0 && x < w && y < h) acc[j][i] = s.labels(x, y);
    }
  return p;
}

MixedSampler::MixedSampler(std::vector<SegSample> real, std::vector<SegSample> synthetic,
                           std::optional<int> ratio, std::uint64_t seed,
                           double foreground_fraction, bool reflection)
    : real_(std::move(real)),
      synthetic_(std::move(synthetic)),
      ratio_(ratio),
      rng_(seed),
      foreground_fraction_(foreground_fraction),
      reflection_(reflection) {
  if (real_.empty()) throw EmptyPool("real sample pool is empty");
  if (ratio_ && synthetic_.empty()) throw EmptyPool("synthetic sample pool is empty");
  if (ratio_ && *ratio_ <= 0) throw ConfigError("mixing ratio must be positive");
}

double MixedSampler::synthetic_probability() const {
  return ratio_ ? 1.0 / (*ratio_ + 1.0) : 0.0;
}

bool MixedSampler::draw_source() { return ratio_ && rng_.bernoulli(synthetic_probability()); }

MixedSampler::Draw MixedSampler::draw() {
  Draw d;
  d.synthetic = draw_source();
  const auto& pool = d.synthetic ? synthetic_ : real_;
  d.sample = pool[rng_.below(pool.size())];
  if (reflection_ && rng_.bernoulli(0.5)) {
    d.flipped = true;
    d.sample.mr = flip_lr(d.sample.mr);
    d.sample.labels = flip_lr(d.sample.labels);
  }
  const auto& lab = d.sample.labels;
  std::vector<std::size_t> fg;
  if (rng_.bernoulli(foreground_fraction_))
    for (std::size_t i = 0; i < lab.size(); ++i)
      if (lab[i]) fg.push_back(i);
  const std::size_t idx = fg.empty() ? rng_.below(lab.size()) : fg[rng_.below(fg.size())];
  d.cx = static_cast<int>(idx % lab.width());
  d.cy = static_cast<int>(idx / lab.width());
  return d;
}

MixedSampler::Batch MixedSampler::batch(int n, const SegNetConfig& cfg) {
  std::vector<torch::Tensor> a, b, c;
  Batch out;
  for (int i = 0; i < n; ++i) {
    const auto d = draw();
    out.synthetic += d.synthetic;
    auto p = extract_patch(d.sample, d.cx, d.cy, cfg);
    a.push_back(p.normal);
    b.push_back(p.context);
    c.push_back(p.labels);
  }
  out.normal = torch::stack(a);
  out.context = torch::stack(b);
  out.labels = torch::stack(c);
  return out;
}

SegModel train_segnet(const SegNetConfig& cfg, MixedSampler& sampler) {
  cfg.validate(sampler.image_size());
  torch::manual_seed(cfg.seed);
  SegModel m;
  m.cfg = cfg;
  m.image_size = sampler.image_size();
  m.net = SegNet(cfg);
  torch::optim::Adam opt(m.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  const int window = cfg.log_every > 0 ? cfg.log_every : std::max(1, cfg.steps / 20);
  double acc = 0.0;
  int count = 0;
  m.net->train();
  for (int step = 0; step < cfg.steps; ++step) {
    const auto b = sampler.batch(cfg.batch, cfg);
    const auto logits = m.net->forward(b.normal, b.context);
    const auto loss = torch::nn::functional::cross_entropy(
        logits, b.labels, torch::nn::functional::CrossEntropyFuncOptions().ignore_index(kIgnore));
    opt.zero_grad();
    loss.backward();
    opt.step();
    acc += loss.item<double>();
    if (++count == window) {
      m.loss_curve.push_back({{"step", step + 1}, {"loss", acc / count}});
      if (cfg.log_every > 0)
        std::cerr << "[seg] step " << step + 1 << " loss " << acc / count << "\n";
      acc = 0.0;
      count = 0;
    }
  }
  m.net->eval();
  return m;
}

std::vector<int> tile_origins(int image_size, int segment) {
  std::vector<int> out;
  for (int o = 0; o < image_size; o += segment) out.push_back(o);
  return out;
}

Mask segment_slice(const SegModel& model, const Image& mr) {
  if (mr.width() != model.image_size || mr.height() != model.image_size)
    throw ShapeMismatch("slice does not match the trained image size");
  torch::NoGradGuard no_grad;
  const auto& cfg = model.cfg;
  const int half = cfg.segment / 2;
  const auto origins = tile_origins(model.image_size, cfg.segment);
  SegSample s{mr, Mask(mr.width(), mr.height(), 0)};
  std::vector<torch::Tensor> a, b;
  std::vector<std::pair<int, int>> where;
  for (int oy : origins)
    for (int ox : origins) {
      const auto p = extract_patch(s, ox + half, oy + half, cfg);
      a.push_back(p.normal);
      b.push_back(p.context);
      where.emplace_back(ox, oy);
    }
  SegNet net = model.net;
  const auto pred = net->forward(torch::stack(a), torch::stack(b)).argmax(1).contiguous();
  auto acc = pred.accessor<std::int64_t, 3>();
  Mask out(mr.width(), mr.height(), 0);
  for (std::size_t t = 0; t < where.size(); ++t)
    for (int j = 0; j < cfg.segment; ++j)
      for (int i = 0; i < cfg.segment; ++i) {
        const int x = where[t].first + i, y = where[t].second + j;
        if (out.contains(x, y)) out(x, y) = static_cast<std::uint8_t>(acc[t][j][i]);
      }
  return out;
}

MaskVolume segment(const SegModel& model, const Volume& mr) {
  const auto slices = data::to_mr_slices(mr);
  MaskVolume out(mr.nx(), mr.ny(), mr.nz(), 0);
  for (int z = 0; z < mr.nz(); ++z) out.set_plane(z, segment_slice(model, slices[z]));
  return out;
}

void SegModel::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.meta["kind"] = "segnet";
  ck.meta["cfg"] = cfg.to_json();
  ck.meta["image_size"] = image_size;
  ck.meta["loss_curve"] = loss_curve;
  for (const auto& p : net->named_parameters()) ck.add(p.key(), p.value().detach());
  ck.save(path);
}

SegModel SegModel::load(const std::filesystem::path& path) {
  const auto ck = Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "segnet") throw IoError(path.string() + " is not a segnet");
  SegModel m;
  m.cfg = SegNetConfig::from_json(ck.meta.at("cfg"));
  m.image_size = ck.meta.at("image_size").get<int>();
  m.loss_curve = ck.meta.value("loss_curve", nlohmann::json::array());
  m.net = SegNet(m.cfg);
  torch::NoGradGuard no_grad;
  for (auto& p : m.net->named_parameters()) p.value().copy_(ck.tensor(p.key()));
  m.net->eval();
  return m;
}

std::uint64_t weights_hash(const SegModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : model.net->named_parameters()) {
    const auto t = p.value().detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.nbytes()); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace gansfer::seg
