#include "gansfer/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gansfer/rng.hpp"

namespace gansfer::phantom {

namespace {

using data::kNumStructures;

enum StructureId { kAccumbens, kAmygdala, kCaudate, kHippocampus, kPallidum, kPutamen, kThalamus };

// Later entries overwrite earlier ones, which keeps masks disjoint.
constexpr std::array<int, kNumStructures> kPaintOrder = {
    kPutamen, kPallidum, kThalamus, kCaudate, kAccumbens, kAmygdala, kHippocampus};

struct Nominal {
  Ellipsoid shape;
  double intensity;
};

// Young healthy template.
const std::array<Nominal, kNumStructures> kTemplate = {{
    {{0.20, -0.60, 0.40, 0.12, 0.11, 0.20}, 0.55},  // accumbens
    {{0.55, 0.45, 0.22, 0.14, 0.14, 0.18}, 0.50},   // amygdala
    {{0.00, -0.20, 0.65, 0.11, 0.20, 0.35}, 0.58},  // caudate (cx set from ventricles)
    {{0.42, 0.72, 0.28, 0.22, 0.14, 0.22}, 0.48},   // hippocampus
    {{0.47, 0.08, 0.48, 0.10, 0.16, 0.22}, 0.72},   // pallidum
    {{0.66, -0.05, 0.50, 0.13, 0.30, 0.30}, 0.60},  // putamen
    {{0.17, 0.38, 0.55, 0.15, 0.22, 0.28}, 0.66},   // thalamus
}};

double age_fraction(double age) { return std::clamp((age - 18.0) / 78.0, 0.0, 1.0); }

double coord(int i, int n) { return (i + 0.5) / n * 2.0 - 1.0; }

}  // namespace

double Ellipsoid::section_scale(double z) const {
  const double t = (z - cz) / rz;
  return t * t >= 1.0 ? 0.0 : std::sqrt(1.0 - t * t);
}

bool Ellipsoid::contains(double x, double y, double z) const {
  const double s = section_scale(z);
  if (s <= 0.0) return false;
  const double dy = (y - cy) / (ry * s);
  const double dx1 = (x - cx) / (rx * s);
  const double dx2 = (x + cx) / (rx * s);
  return dx1 * dx1 + dy * dy <= 1.0 || dx2 * dx2 + dy * dy <= 1.0;
}

double Ellipsoid::max_section_area() const { return 2.0 * M_PI * rx * ry; }

double Ellipsoid::volume() const { return 2.0 * 4.0 / 3.0 * M_PI * rx * ry * rz; }

data::StructureMasks3 render_masks(const PhantomParams& params, const PhantomGeometry& geom) {
  const int n = geom.resolution;
  MaskVolume map(n, n, geom.depth, 0);
  for (int z = 0; z < geom.depth; ++z) {
    const double zz = (z + 0.5) / geom.depth;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = coord(x, n), v = coord(y, n);
        std::uint8_t label = 0;
        for (int s : kPaintOrder)
          if (params.structures[s].contains(u, v, zz)) label = static_cast<std::uint8_t>(s + 1);
        if (params.ventricles.contains(u, v, zz)) label = 0;
        map(x, y, z) = label;
      }
  }
  return data::from_label_map(map);
}

MaskVolume render_ventricles(const PhantomParams& params, const PhantomGeometry& geom) {
  const int n = geom.resolution;
  MaskVolume out(n, n, geom.depth, 0);
  for (int z = 0; z < geom.depth; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        out(x, y, z) = params.ventricles.contains(coord(x, n), coord(y, n), (z + 0.5) / geom.depth);
  return out;
}

PhantomSample generate_phantom(std::uint64_t seed, double age, data::Cdr cdr,
                               const PhantomGeometry& geom) {
  Rng rng(seed);
  const double af = age_fraction(age);
  const int level = data::cdr_level(cdr);

  // Jitter draws: fixed count and order.
  const double vent_gain = rng.uniform(0.9, 1.1);
  const double atrophy_gain = rng.uniform(0.9, 1.1);
  std::array<std::array<double, 4>, kNumStructures> shape_jitter{};
  for (auto& j : shape_jitter) {
    j[0] = rng.uniform(-0.03, 0.03);
    j[1] = rng.uniform(-0.03, 0.03);
    j[2] = rng.uniform(0.95, 1.05);
    j[3] = rng.uniform(0.95, 1.05);
  }
  std::array<double, kNumStructures> intensity_jitter{};
  for (auto& j : intensity_jitter) j = rng.uniform(-0.02, 0.02);
  const double wm_jitter = rng.uniform(-0.02, 0.02);
  const double gm_jitter = rng.uniform(-0.02, 0.02);
  const double scale = rng.uniform(0.9, 1.1);

  PhantomParams p;
  p.ventricle_scale = 1.0 + vent_gain * (1.1 * af + 0.15 * level);
  p.atrophy = 1.0 - atrophy_gain * (0.08 * level + 0.05 * af);
  p.brain_scale = 1.0 - 0.06 * af;
  p.intensity_scale = scale;
  p.wm_intensity = (0.80 + wm_jitter) * scale;
  p.gm_intensity = (0.45 + gm_jitter) * scale;
  p.csf_intensity = 0.12 * scale;
  p.noise_seed = rng.next_u64();

  const double vs = p.ventricle_scale;
  const double vent_rx = 0.07 * vs;
  p.ventricles = {0.03 + vent_rx, -0.10, 0.65, vent_rx, 0.28 * (1.0 + 0.5 * (vs - 1.0)), 0.45};

  for (int s = 0; s < kNumStructures; ++s) {
    Ellipsoid e = kTemplate[s].shape;
    if (s == kCaudate) e.cx = 0.03 + 2.0 * vent_rx + 0.02 + e.rx;
    e.cx += shape_jitter[s][0];
    e.cy += shape_jitter[s][1];
    e.rx *= shape_jitter[s][2];
    e.ry *= shape_jitter[s][3];
    if (s == kHippocampus || s == kAmygdala) {
      e.rx *= p.atrophy;
      e.ry *= p.atrophy;
    }
    p.structures[s] = e;
    p.structure_intensity[s] = (kTemplate[s].intensity + intensity_jitter[s]) * scale;
  }

  PhantomSample out;
  out.params = p;
  auto& sample = out.sample;
  sample.age = age;
  sample.cdr = cdr;
  sample.labels = render_masks(p, geom);
  const auto ventricles = render_ventricles(p, geom);

  const int n = geom.resolution;
  sample.mr = Volume(n, n, geom.depth, 0.0f);
  Rng noise(p.noise_seed);
  for (int z = 0; z < geom.depth; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = coord(x, n), v = coord(y, n);
        const double r = std::sqrt(u * u + v * v) / 0.98;
        if (r > 1.0) continue;  // background stays exactly 0
        double value = p.wm_intensity;
        if (r > p.brain_scale) value = p.csf_intensity;
        else if (r > 0.80 * p.brain_scale) value = p.gm_intensity;
        for (int s = 0; s < kNumStructures; ++s)
          if (sample.labels[s](x, y, z)) value = p.structure_intensity[s];
        if (ventricles(x, y, z)) value = p.csf_intensity;
        value += noise.normal(0.0, geom.noise_sigma);
        if (value == 0.0) value = 1e-6;
        sample.mr(x, y, z) = static_cast<float>(value);
      }
  return out;
}

void PhantomSpec::validate() const {
  double total = 0.0;
  for (const auto& [level, prob] : cdr_distribution) {
    data::cdr_from_value(level);
    if (prob < 0.0) throw ConfigError("negative CDR probability");
    total += prob;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("CDR probabilities must sum to 1");
  if (base_resolution <= 0 || resolution < base_resolution || resolution % base_resolution)
    throw ConfigError("resolution must be base_resolution * 2^k");
  int ratio = resolution / base_resolution;
  if (ratio & (ratio - 1)) throw ConfigError("resolution must be base_resolution * 2^k");
  if (n_subjects < 0 || n_labelled < 0 || depth <= 0) throw ConfigError("bad cohort sizes");
  if (age_range[0] > age_range[1] || labelled_age_range[0] > labelled_age_range[1])
    throw ConfigError("bad age range");
}

namespace {

std::string make_id(const std::string& prefix, int i) {
  std::ostringstream os;
  os << prefix << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

std::vector<PhantomSample> generate_subjects(std::uint64_t seed,
                                             const std::vector<Covariates>& covariates,
                                             const std::string& prefix,
                                             const PhantomGeometry& geom) {
  std::vector<PhantomSample> out;
  out.reserve(covariates.size());
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    auto s = generate_phantom(derive_seed(seed, i), covariates[i].age, covariates[i].cdr, geom);
    s.sample.subject_id = make_id(prefix, static_cast<int>(i));
    out.push_back(std::move(s));
  }
  return out;
}

Cohort generate_cohort(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0xC0405));
  std::vector<Covariates> labelled(spec.n_labelled);
  for (auto& c : labelled)
    c = {rng.uniform(spec.labelled_age_range[0], spec.labelled_age_range[1]), data::Cdr::k0};

  std::vector<Covariates> unlabelled(spec.n_subjects);
  for (auto& c : unlabelled) {
    double u = rng.uniform();
    double level = spec.cdr_distribution.rbegin()->first;
    for (const auto& [value, prob] : spec.cdr_distribution) {
      if (u < prob) {
        level = value;
        break;
      }
      u -= prob;
    }
    c.cdr = data::cdr_from_value(level);
    const double lo = c.cdr == data::Cdr::k0
                          ? spec.age_range[0]
                          : std::max(spec.age_range[0], spec.pathology_min_age);
    c.age = rng.uniform(lo, spec.age_range[1]);
  }

  const auto geom = spec.geometry();
  Cohort cohort;
  cohort.labelled = generate_subjects(derive_seed(spec.seed, 1), labelled, "L", geom);
  cohort.unlabelled = generate_subjects(derive_seed(spec.seed, 2), unlabelled, "U", geom);
  return cohort;
}

}  // namespace gansfer::phantom
