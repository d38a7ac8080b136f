#include "gansfer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <torch/torch.h>

#include "gansfer/dataset_io.hpp"
#include "gansfer/rng.hpp"

namespace gansfer::synth {

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

// Marks background pixels 4-connected to the border.
Mask outside_region(const Mask& m) {
  const int w = m.width(), h = m.height();
  Mask seen(w, h, 0);
  std::vector<std::pair<int, int>> stack;
  auto push = [&](int x, int y) {
    if (!m.contains(x, y) || m(x, y) || seen(x, y)) return;
    seen(x, y) = 1;
    stack.emplace_back(x, y);
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    for (int k = 0; k < 4; ++k) push(x + kDx[k], y + kDy[k]);
  }
  return seen;
}

// 1D squared distance along a line of sites at spacing `s` (Felzenszwalb &
// Huttenlocher lower envelope). f holds squared distances, +inf for none.
void edt_1d(std::vector<double>& f, double s, std::vector<double>& out,
            std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  out.assign(n, inf);
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const double xq = q * s;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double sep;
    while (true) {
      const double xr = v[k] * s;
      sep = ((f[q] + xq * xq) - (f[v[k]] + xr * xr)) / (2.0 * (xq - xr));
      if (sep <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (sep <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = sep;
    z[k + 1] = inf;
  }
  if (k < 0) return;
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = q * s;
    while (z[j + 1] < xq) ++j;
    const double d = xq - v[j] * s;
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace

Mask dilate_cross(const Mask& m) {
  Mask out(m.width(), m.height(), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool on = m(x, y) != 0;
      for (int k = 0; k < 4 && !on; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        on = m.contains(nx, ny) && m(nx, ny);
      }
      out(x, y) = on;
    }
  return out;
}

// Pixels beyond the border count as background.
Mask erode_cross(const Mask& m) {
  Mask out(m.width(), m.height(), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool on = m(x, y) != 0;
      for (int k = 0; k < 4 && on; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        on = m.contains(nx, ny) && m(nx, ny);
      }
      out(x, y) = on;
    }
  return out;
}

Mask close_cross(const Mask& m) { return erode_cross(dilate_cross(m)); }
Mask open_cross(const Mask& m) { return dilate_cross(erode_cross(m)); }

Mask fill_holes(const Mask& m) {
  const Mask outside = outside_region(m);
  Mask out(m.width(), m.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] || !outside[i];
  return out;
}

std::size_t count_holes(const Mask& m) {
  const Mask outside = outside_region(m);
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) n += !m[i] && !outside[i];
  return n;
}

Grid2<int> label_components(const Mask& m, int& n_components) {
  Grid2<int> labels(m.width(), m.height(), 0);
  n_components = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y) || labels(x, y)) continue;
      const int id = ++n_components;
      labels(x, y) = id;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + kDx[k], ny = cy + kDy[k];
          if (m.contains(nx, ny) && m(nx, ny) && !labels(nx, ny)) {
            labels(nx, ny) = id;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  return labels;
}

Mask remove_small_components(const Mask& m, int min_area) {
  int n = 0;
  const auto labels = label_components(m, n);
  std::vector<int> area(n + 1, 0);
  for (std::size_t i = 0; i < m.size(); ++i) ++area[labels[i]];
  Mask out(m.width(), m.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = labels[i] > 0 && area[labels[i]] >= min_area;
  return out;
}

Mask mask_and(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("mask shapes differ");
  Mask out(a.width(), a.height(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

OtsuResult otsu_threshold(const std::vector<float>& values) {
  if (values.empty()) return {0.0, true};
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn_it, hi = *mx_it;
  if (hi == lo) return {0.5 * hi, true};
  constexpr int kBins = 256;
  const double width = (hi - lo) / kBins;
  std::vector<double> count(kBins, 0.0), sum(kBins, 0.0);
  for (float v : values) {
    const int b = std::clamp(static_cast<int>((v - lo) / width), 0, kBins - 1);
    count[b] += 1.0;
    sum[b] += v;
  }
  const double total = static_cast<double>(values.size());
  double total_sum = 0.0;
  for (double s : sum) total_sum += s;
  double w0 = 0.0, s0 = 0.0, best = 0.0;
  int best_k = -1;
  for (int k = 0; k < kBins - 1; ++k) {
    w0 += count[k];
    s0 += sum[k];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = s0 / w0, m1 = (total_sum - s0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  if (best_k < 0) return {0.5 * hi, true};
  // Largest value in the lower class, so "above threshold" matches the split.
  double t = -std::numeric_limits<double>::infinity();
  for (float v : values)
    if (std::clamp(static_cast<int>((v - lo) / width), 0, kBins - 1) <= best_k)
      t = std::max(t, static_cast<double>(v));
  return {t, false};
}

int assign_slice(const Image& synth_mr, const std::vector<data::IndexedSlice<float>>& pool) {
  if (pool.empty()) throw EmptyPool("slice assignment pool is empty");
  double best = std::numeric_limits<double>::infinity();
  int best_index = 0;
  for (const auto& s : pool) {
    if (!s.plane.same_shape(synth_mr)) throw ShapeMismatch("pool slice shape differs");
    double d = 0.0;
    for (std::size_t i = 0; i < synth_mr.size(); ++i) {
      const double e = static_cast<double>(synth_mr[i]) - s.plane[i];
      d += e * e;
    }
    if (d < best || (d == best && s.index < best_index)) {
      best = d;
      best_index = s.index;
    }
  }
  return best_index;
}

Grid3<double> squared_distance_transform(const MaskVolume& m, std::array<double, 3> spacing_mm) {
  const double inf = std::numeric_limits<double>::infinity();
  const int nx = m.nx(), ny = m.ny(), nz = m.nz();
  Grid3<double> d(nx, ny, nz, inf);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) d[i] = 0.0;
  std::vector<double> f, out, z;
  std::vector<int> v;
  for (int zz = 0; zz < nz; ++zz)
    for (int y = 0; y < ny; ++y) {
      f.resize(nx);
      for (int x = 0; x < nx; ++x) f[x] = d(x, y, zz);
      edt_1d(f, spacing_mm[0], out, v, z);
      for (int x = 0; x < nx; ++x) d(x, y, zz) = out[x];
    }
  for (int zz = 0; zz < nz; ++zz)
    for (int x = 0; x < nx; ++x) {
      f.resize(ny);
      for (int y = 0; y < ny; ++y) f[y] = d(x, y, zz);
      edt_1d(f, spacing_mm[1], out, v, z);
      for (int y = 0; y < ny; ++y) d(x, y, zz) = out[y];
    }
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      f.resize(nz);
      for (int zz = 0; zz < nz; ++zz) f[zz] = d(x, y, zz);
      edt_1d(f, spacing_mm[2], out, v, z);
      for (int zz = 0; zz < nz; ++zz) d(x, y, zz) = out[zz];
    }
  return d;
}

Mask StructureMasks::slice(int s, int z) const {
  const auto& m = masks[s];
  if (z < 0 || z >= m.nz()) return Mask(m.nx(), m.ny(), 0);
  return m.plane(z);
}

StructureMasks build_structure_masks(const std::vector<data::LabelledSample>& train,
                                     double radius_mm, std::array<double, 3> spacing_mm) {
  if (train.empty()) throw EmptyPool("no labelled subjects for structure masks");
  StructureMasks out;
  out.radius_mm = radius_mm;
  const auto& ref = train.front().mr;
  for (int s = 0; s < data::kNumStructures; ++s) {
    MaskVolume u(ref.nx(), ref.ny(), ref.nz(), 0);
    for (const auto& t : train) {
      if (!t.labels[s].same_shape(u)) throw ShapeMismatch("training masks differ in shape");
      for (std::size_t i = 0; i < u.size(); ++i) u[i] |= t.labels[s][i];
    }
    const auto d = squared_distance_transform(u, spacing_mm);
    // Small slack so that exact lattice distances at the radius are included.
    const double r2 = radius_mm * radius_mm * (1.0 + 1e-12);
    MaskVolume m(u.nx(), u.ny(), u.nz(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = d[i] <= r2;
    out.masks[s] = std::move(m);
  }
  for (const auto& t : train) out.provenance.push_back(t.subject_id);
  return out;
}

PostprocessResult postprocess(const SyntheticSample& sample, const StructureMasks& masks,
                              const PostprocessConfig& cfg) {
  if (sample.slice_index < 0) throw InvalidSample("sample has no assigned slice");
  if (static_cast<int>(sample.channels.size()) != data::kNumGanChannels)
    throw InvalidSample("synthetic sample needs 8 channels");
  const Image& mr = sample.channels[0];
  PostprocessResult res;
  for (int s = 0; s < data::kNumStructures; ++s) {
    auto& tr = res.trace[s];
    const Image& ch = sample.channels[s + 1];
    tr.anatomy = masks.slice(s, sample.slice_index);
    if (!tr.anatomy.same_shape(ch)) throw ShapeMismatch("structure mask shape differs from sample");

    // (1) mask and (2) binarize.
    std::vector<float> inside;
    for (std::size_t i = 0; i < ch.size(); ++i)
      if (tr.anatomy[i]) inside.push_back(ch[i]);
    const auto otsu = otsu_threshold(inside);
    tr.threshold = std::max(otsu.threshold, cfg.min_contrast);
    tr.otsu_fallback = otsu.fallback;
    tr.binarized = Mask(ch.width(), ch.height(), 0);
    for (std::size_t i = 0; i < ch.size(); ++i)
      tr.binarized[i] = tr.anatomy[i] && ch[i] > tr.threshold;

    // (3) closing and hole fill.
    tr.repaired = mask_and(fill_holes(close_cross(tr.binarized)), tr.anatomy);

    // (4) intensity gate.
    double sum = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mr.size(); ++i)
      if (tr.repaired[i]) {
        sum += mr[i];
        ++n;
      }
    tr.gated = tr.repaired;
    if (n > 0) {
      tr.gate_mean = sum / static_cast<double>(n);
      for (std::size_t i = 0; i < mr.size(); ++i)
        if (tr.repaired[i]) ss += (mr[i] - tr.gate_mean) * (mr[i] - tr.gate_mean);
      tr.gate_sd = std::sqrt(ss / static_cast<double>(n));
      const double band = cfg.gate_sigmas * tr.gate_sd;
      for (std::size_t i = 0; i < mr.size(); ++i)
        if (tr.gated[i] && std::abs(mr[i] - tr.gate_mean) > band) tr.gated[i] = 0;
    }

    // (5) hole fill, opening, small-component removal. Opening can enclose
    // new holes, so the result is filled once more.
    Mask out = fill_holes(
        remove_small_components(open_cross(fill_holes(tr.gated)), cfg.min_component_area));
    tr.final = mask_and(out, tr.anatomy);
    res.labels[s] = tr.final;
  }
  return res;
}

Mask synthetic_label_map(const SyntheticSample& sample) {
  const auto& ref = sample.binary_labels.front();
  Mask out(ref.width(), ref.height(), 0);
  std::vector<float> best(ref.size(), -std::numeric_limits<float>::infinity());
  for (int s = 0; s < data::kNumStructures; ++s)
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (sample.binary_labels[s][i] && sample.channels[s + 1][i] > best[i]) {
        best[i] = sample.channels[s + 1][i];
        out[i] = static_cast<std::uint8_t>(s + 1);
      }
  return out;
}

double quality_score(const Image& synth_mr, const std::vector<Image>& pool) {
  if (pool.empty()) throw EmptyPool("quality pool is empty");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pool) {
    if (!p.same_shape(synth_mr)) throw ShapeMismatch("pool image shape differs");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double e = static_cast<double>(synth_mr[i]) - p[i];
      d += e * e;
    }
    best = std::min(best, d);
  }
  return std::sqrt(best);
}

std::vector<double> quality_scores(const torch::Tensor& synth, const torch::Tensor& pool) {
  if (pool.size(0) == 0) throw EmptyPool("quality pool is empty");
  if (synth.size(0) == 0) return {};
  const auto a = synth.reshape({synth.size(0), -1}).to(torch::kFloat64);
  const auto b = pool.reshape({pool.size(0), -1}).to(torch::kFloat64);
  if (a.size(1) != b.size(1)) throw ShapeMismatch("pool image shape differs");
  // Direct differences, so an image present in the pool scores exactly 0.
  const auto d = torch::cdist(a, b, 2.0, /*compute_mode=*/2);
  const auto mins = std::get<0>(d.min(1)).contiguous();
  return {mins.data_ptr<double>(), mins.data_ptr<double>() + mins.numel()};
}

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw EmptyPool("no values");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

std::vector<bool> filter_by_quality(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const double p75 = nearest_rank_percentile(scores, 75.0);
  std::vector<bool> keep(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) keep[i] = scores[i] <= p75;
  return keep;
}

std::vector<const SyntheticSample*> SyntheticPool::kept() const {
  std::vector<const SyntheticSample*> out;
  for (const auto& s : samples)
    if (s.kept) out.push_back(&s);
  return out;
}

nlohmann::json SyntheticPool::provenance_counts() const {
  std::map<std::string, int> counts;
  for (const auto& s : samples)
    if (s.kept) ++counts[s.phase + "/gan" + std::to_string(s.gan_id)];
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : counts) j[k] = v;
  return j;
}

std::vector<data::IndexedSlice<float>> assignment_pool(
    const std::vector<data::LabelledSample>& train) {
  std::vector<data::IndexedSlice<float>> out;
  for (const auto& t : train) {
    const auto mr = data::to_mr_slices(t.mr);
    for (int z = 0; z < static_cast<int>(mr.size()); ++z) out.push_back({z, mr[z]});
  }
  return out;
}

SyntheticPool generate_raw(const std::vector<SynthSource>& sources, int n,
                           const std::vector<data::IndexedSlice<float>>& assign_pool,
                           const SynthConfig& cfg) {
  if (sources.empty()) throw EmptyPool("no generators to sample from");
  if (n <= 0) throw BadCount("synthetic sample count must be positive");
  SyntheticPool pool;
  const int k = static_cast<int>(sources.size());
  torch::NoGradGuard no_grad;
  for (int si = 0; si < k; ++si) {
    const auto& src = sources[si];
    const int count = n / k + (si < n % k ? 1 : 0);
    const int latent_dim = src.generator->arch().latent_dim;
    const auto source_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(si));
    for (int start = 0; start < count; start += cfg.batch) {
      const int b = std::min(cfg.batch, count - start);
      std::vector<torch::Tensor> zs;
      std::vector<std::uint64_t> seeds;
      for (int j = 0; j < b; ++j) {
        seeds.push_back(derive_seed(source_seed, static_cast<std::uint64_t>(start + j)));
        Rng r(seeds.back());
        zs.push_back(gan::sample_latents(1, latent_dim, r, torch::kFloat32));
      }
      const auto out = src.generator->generate(torch::cat(zs)).to(torch::kFloat32).contiguous();
      const int res = static_cast<int>(out.size(2));
      for (int j = 0; j < b; ++j) {
        SyntheticSample s;
        s.phase = src.phase;
        s.gan_id = src.gan_id;
        s.latent_seed = seeds[j];
        for (int c = 0; c < data::kNumGanChannels; ++c) {
          Image im(res, res);
          const float* p = out[j][c].data_ptr<float>();
          std::copy(p, p + im.size(), im.storage().begin());
          s.channels.push_back(std::move(im));
        }
        s.slice_index = assign_slice(s.channels[0], assign_pool);
        pool.samples.push_back(std::move(s));
      }
    }
  }
  return pool;
}

void postprocess_pool(SyntheticPool& pool, const StructureMasks& masks,
                      const PostprocessConfig& cfg) {
  for (auto& s : pool.samples) s.binary_labels = postprocess(s, masks, cfg).labels;
}

void score_and_filter(SyntheticPool& pool, const torch::Tensor& score_pool, int batch) {
  if (pool.samples.empty()) throw EmptyPool("synthetic pool is empty");
  const int res = pool.samples.front().channels[0].width();
  for (std::size_t start = 0; start < pool.samples.size(); start += batch) {
    const std::size_t end = std::min(pool.samples.size(), start + batch);
    auto mr = torch::empty({static_cast<std::int64_t>(end - start), 1, res, res});
    for (std::size_t i = start; i < end; ++i) {
      const auto& v = pool.samples[i].channels[0].values();
      std::copy(v.begin(), v.end(), mr[i - start].data_ptr<float>());
    }
    const auto scores = quality_scores(mr, score_pool);
    for (std::size_t i = start; i < end; ++i) pool.samples[i].quality_score = scores[i - start];
  }
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pool.samples.size(); ++i)
    groups[{pool.samples[i].phase, pool.samples[i].gan_id}].push_back(i);
  for (const auto& [key, idx] : groups) {
    std::vector<double> scores;
    for (auto i : idx) scores.push_back(pool.samples[i].quality_score);
    const auto keep = filter_by_quality(scores);
    for (std::size_t j = 0; j < idx.size(); ++j) pool.samples[idx[j]].kept = keep[j];
  }
}

SyntheticPool generate_synthetic_dataset(const std::vector<SynthSource>& sources, int n,
                                         const StructureMasks& masks,
                                         const std::vector<data::IndexedSlice<float>>& assign_pool,
                                         const torch::Tensor& score_pool,
                                         const SynthConfig& cfg) {
  auto pool = generate_raw(sources, n, assign_pool, cfg);
  postprocess_pool(pool, masks, cfg.post);
  score_and_filter(pool, score_pool, cfg.batch);
  return pool;
}

void write_pool(const std::filesystem::path& dir, const SyntheticPool& pool) {
  if (pool.samples.empty()) throw EmptyPool("cannot store an empty synthetic pool");
  const int w = pool.samples.front().channels[0].width();
  const int h = pool.samples.front().channels[0].height();
  const int n = static_cast<int>(pool.samples.size());
  io::StoredSubject st;
  st.meta["kind"] = "synthetic_pool";
  st.meta["subject_id"] = "synthetic";
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& s : pool.samples)
    prov.push_back({{"phase", s.phase},
                    {"gan_id", s.gan_id},
                    {"latent_seed", s.latent_seed},
                    {"quality_score", s.quality_score},
                    {"kept", s.kept},
                    {"slice_index", s.slice_index}});
  st.meta["provenance"] = prov;
  auto stack = [&](const std::string& name, bool binary, auto&& get) {
    io::ChannelVolume cv{name, Volume(w, h, n), binary};
    for (int z = 0; z < n; ++z) {
      const auto& plane = get(pool.samples[z]);
      // Raw pools have no labels yet; their label stacks stay zero.
      if (plane.size() == 0) continue;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) cv.values(x, y, z) = static_cast<float>(plane(x, y));
    }
    st.channels.push_back(std::move(cv));
  };
  stack("mr", false, [](const SyntheticSample& s) -> const Image& { return s.channels[0]; });
  for (int c = 0; c < data::kNumStructures; ++c) {
    const std::string name(data::kStructureNames[c]);
    stack("seg_" + name, false,
          [c](const SyntheticSample& s) -> const Image& { return s.channels[c + 1]; });
    stack("label_" + name, true,
          [c](const SyntheticSample& s) -> const Mask& { return s.binary_labels[c]; });
  }
  io::write_stored(dir, st);
}

SyntheticPool read_pool(const std::filesystem::path& dir) {
  const auto st = io::read_stored(dir);
  if (st.meta.value("kind", "") != "synthetic_pool")
    throw IoError(dir.string() + " is not a synthetic pool");
  const auto& prov = st.meta.at("provenance");
  SyntheticPool pool;
  const auto& mr = st.channel("mr").values;
  for (int z = 0; z < static_cast<int>(prov.size()); ++z) {
    SyntheticSample s;
    const auto& p = prov[z];
    s.phase = p.at("phase").get<std::string>();
    s.gan_id = p.at("gan_id").get<int>();
    s.latent_seed = p.at("latent_seed").get<std::uint64_t>();
    s.quality_score = p.at("quality_score").get<double>();
    s.kept = p.at("kept").get<bool>();
    s.slice_index = p.at("slice_index").get<int>();
    s.channels.push_back(mr.plane(z));
    for (int c = 0; c < data::kNumStructures; ++c) {
      const std::string name(data::kStructureNames[c]);
      s.channels.push_back(st.channel("seg_" + name).values.plane(z));
      const auto lab = st.channel("label_" + name).values.plane(z);
      Mask m(lab.width(), lab.height(), 0);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = lab[i] > 0.5f;
      s.binary_labels[c] = std::move(m);
    }
    pool.samples.push_back(std::move(s));
  }
  return pool;
}

}  // namespace gansfer::synth
