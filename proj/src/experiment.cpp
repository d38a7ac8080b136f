#include "gansfer/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <tuple>

#include <torch/torch.h>

#include "gansfer/dataset_io.hpp"
#include "gansfer/errors.hpp"
#include "gansfer/rng.hpp"

namespace gansfer::experiment {

namespace {

constexpr std::uint64_t kGanStream = 1;
constexpr std::uint64_t kSynthStream = 2;
constexpr std::uint64_t kSamplerStream = 3;
constexpr std::uint64_t kDiversityStream = 4;
constexpr std::uint64_t kSegStream = 5;

const std::set<int> kAllowedBudgets{1, 3, 6, 12, 24};
const std::set<std::string> kAllowedRatios{"baseline", "100", "10", "2", "1"};

nlohmann::json features_json(const eval::Features& f) {
  return std::vector<double>(f.begin(), f.end());
}

eval::Features features_from(const nlohmann::json& j) {
  eval::Features f{};
  for (int i = 0; i < data::kNumStructures; ++i) f[i] = j.at(i).get<double>();
  return f;
}

eval::DscReport report_from(const nlohmann::json& j) {
  eval::DscReport r;
  r.subject_id = j.at("subject_id").get<std::string>();
  r.age = j.at("age").get<double>();
  r.cdr = data::cdr_from_value(j.at("cdr").get<double>());
  r.overall = j.at("overall").get<double>();
  r.mean = j.at("mean").get<double>();
  for (int s = 0; s < data::kNumStructures; ++s)
    r.per_structure[s] = j.at("structures").at(std::string(data::kStructureNames[s])).get<double>();
  return r;
}

const gan::GeneratorNet& phase_generator(const phases::GansferRun& run, const std::string& phase) {
  if (phase == "p1") return run.p1;
  if (phase == "p2") return run.p2;
  if (phase == "p3") return run.p3;
  throw ConfigError("unknown synthesis phase '" + phase + "'");
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

nlohmann::json phantom_spec_json(const phantom::PhantomSpec& s) {
  nlohmann::json cdr = nlohmann::json::object();
  for (const auto& [k, v] : s.cdr_distribution) cdr[fixed(k, 1)] = v;
  return {{"n_subjects", s.n_subjects},
          {"n_labelled", s.n_labelled},
          {"age_range", s.age_range},
          {"labelled_age_range", s.labelled_age_range},
          {"cdr_distribution", cdr},
          {"pathology_min_age", s.pathology_min_age},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed},
          {"resolution", s.resolution},
          {"base_resolution", s.base_resolution},
          {"depth", s.depth}};
}

void phantom_spec_update(phantom::PhantomSpec& s, const nlohmann::json& j) {
  s.n_subjects = j.value("n_subjects", s.n_subjects);
  s.n_labelled = j.value("n_labelled", s.n_labelled);
  s.age_range = j.value("age_range", s.age_range);
  s.labelled_age_range = j.value("labelled_age_range", s.labelled_age_range);
  if (j.contains("cdr_distribution")) {
    s.cdr_distribution.clear();
    for (const auto& [k, v] : j["cdr_distribution"].items())
      s.cdr_distribution[std::stod(k)] = v.get<double>();
  }
  s.pathology_min_age = j.value("pathology_min_age", s.pathology_min_age);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.resolution = j.value("resolution", s.resolution);
  s.base_resolution = j.value("base_resolution", s.base_resolution);
  s.depth = j.value("depth", s.depth);
}

// Manifest written after every stage so that an aborted run shows where it stopped.
struct Manifest {
  fs::path path;
  nlohmann::json j;

  void stage(const std::string& name, const nlohmann::json& info) {
    j["stages"][name] = info;
    io::write_json(path, j);
  }
};

}  // namespace

fs::path default_output_root(const fs::path& fallback) {
  if (const char* env = std::getenv("GANSFER_OUTPUT_ROOT"); env && *env) return env;
  return fallback;
}

std::optional<int> parse_ratio(const std::string& ratio) {
  if (ratio == "baseline") return std::nullopt;
  std::size_t used = 0;
  int r = 0;
  try {
    r = std::stoi(ratio, &used);
  } catch (const std::exception&) {
    throw ConfigError("ratio must be 'baseline' or a positive integer, got '" + ratio + "'");
  }
  if (used != ratio.size() || r < 1)
    throw ConfigError("ratio must be 'baseline' or a positive integer, got '" + ratio + "'");
  return r;
}

// --- cell --------------------------------------------------------------------

void CellConfig::validate() const {
  gan.validate();
  seg.validate();
  if (ratios.empty()) throw ConfigError("at least one ratio is required");
  for (const auto& r : ratios) parse_ratio(r);
  if (synth_phases.empty()) throw ConfigError("at least one synthesis phase is required");
  for (const auto& p : synth_phases)
    if (p != "p1" && p != "p2" && p != "p3") throw ConfigError("unknown synthesis phase " + p);
  if (n_synthetic < 1) throw ConfigError("n_synthetic must be positive");
  if (structure_radius_mm < 0) throw ConfigError("structure_radius_mm must be >= 0");
  if (diversity_samples == 1 || diversity_samples < 0)
    throw ConfigError("diversity_samples must be 0 or at least 2");
}

nlohmann::json CellConfig::to_json() const {
  return {{"gan", gan.to_json()},
          {"synth_phases", synth_phases},
          {"n_synthetic", n_synthetic},
          {"structure_radius_mm", structure_radius_mm},
          {"post",
           {{"min_component_area", post.min_component_area},
            {"gate_sigmas", post.gate_sigmas},
            {"min_contrast", post.min_contrast}}},
          {"seg", seg.to_json()},
          {"ratios", ratios},
          {"diversity_samples", diversity_samples},
          {"seed", seed}};
}

CellConfig CellConfig::from_json(const nlohmann::json& j) {
  CellConfig c;
  if (j.contains("gan")) c.gan = phases::GansferConfig::from_json(j["gan"]);
  c.synth_phases = j.value("synth_phases", c.synth_phases);
  c.n_synthetic = j.value("n_synthetic", c.n_synthetic);
  c.structure_radius_mm = j.value("structure_radius_mm", c.structure_radius_mm);
  if (j.contains("post")) {
    const auto& p = j["post"];
    c.post.min_component_area = p.value("min_component_area", c.post.min_component_area);
    c.post.gate_sigmas = p.value("gate_sigmas", c.post.gate_sigmas);
    c.post.min_contrast = p.value("min_contrast", c.post.min_contrast);
  }
  if (j.contains("seg")) c.seg = seg::SegNetConfig::from_json(j["seg"]);
  c.ratios = j.value("ratios", c.ratios);
  c.diversity_samples = j.value("diversity_samples", c.diversity_samples);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json SubjectResult::to_json() const {
  auto j = dsc.to_json();
  j["predicted_volumes"] = features_json(predicted_volumes);
  j["reference_volumes"] = features_json(reference_volumes);
  return j;
}

SubjectResult SubjectResult::from_json(const nlohmann::json& j) {
  return {report_from(j), features_from(j.at("predicted_volumes")),
          features_from(j.at("reference_volumes"))};
}

std::vector<SubjectResult> evaluate_model(const seg::SegModel& model,
                                          const std::vector<data::LabelledSample>& subjects) {
  std::vector<SubjectResult> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) {
    const auto pred = seg::segment(model, s.mr);
    const auto ref = data::to_label_map(s.labels);
    out.push_back({eval::dsc_report(pred, ref, s.subject_id, s.age, s.cdr),
                   eval::volumes_from_seg(pred, synth::kPhantomSpacingMm),
                   eval::volumes_from_seg(ref, synth::kPhantomSpacingMm)});
  }
  return out;
}

torch::Tensor mr_tensor(const std::vector<data::LabelledSample>& subjects) {
  std::vector<Image> images;
  for (const auto& s : subjects)
    for (auto& im : data::to_mr_slices(s.mr)) images.push_back(std::move(im));
  return phases::images_to_tensor(images);
}

torch::Tensor labelled_tensor(const std::vector<data::LabelledSample>& subjects) {
  std::vector<data::MultiChannelSlice> slices;
  for (const auto& s : subjects)
    for (auto& sl : data::to_gan_slices(s)) slices.push_back(std::move(sl));
  return phases::slices_to_tensor(slices);
}

CellResult run_cell(const std::vector<data::LabelledSample>& train,
                    const torch::Tensor& unlabelled_mr, const std::vector<EvalSet>& eval_sets,
                    const CellConfig& cfg, const std::optional<fs::path>& dir) {
  cfg.validate();
  if (train.empty()) throw BadBudget("a cell needs at least one labelled subject");
  if (dir) fs::create_directories(*dir);
  auto at = [&](const std::string& name) { return *dir / name; };
  CellResult out;

  auto gan_cfg = cfg.gan;
  gan_cfg.train.seed = derive_seed(cfg.seed, kGanStream);
  std::vector<phases::GansferRun> runs;
  std::optional<fs::path> gan_dir;
  if (dir) gan_dir = at("gan");
  if (train.size() == 12 || train.size() == 24) {
    runs = phases::run_multi_gan(train, unlabelled_mr, gan_cfg, gan_dir);
  } else {
    auto run = phases::run_gansfer(labelled_tensor(train), unlabelled_mr, gan_cfg, gan_dir);
    for (const auto& s : train) run.group.push_back(s.subject_id);
    runs.push_back(std::move(run));
  }
  for (std::size_t gi = 0; gi < runs.size(); ++gi) {
    out.gan_metrics.push_back({{"gan_id", gi}, {"group", runs[gi].group}, {"metrics", runs[gi].metrics}});
    if (cfg.diversity_samples > 0) {
      const auto seed = derive_seed(cfg.seed, kDiversityStream);
      out.diversity.push_back(
          {{"gan_id", gi},
           {"p1", phases::sample_diversity(runs[gi].p1, cfg.diversity_samples, seed)},
           {"p2", phases::sample_diversity(runs[gi].p2, cfg.diversity_samples, seed)},
           {"p3", phases::sample_diversity(runs[gi].p3, cfg.diversity_samples, seed)}});
    }
  }
  if (dir) io::write_json(at("gan_metrics.json"), {{"runs", out.gan_metrics}, {"diversity", out.diversity}});

  const bool needs_pool = std::any_of(cfg.ratios.begin(), cfg.ratios.end(),
                                      [](const std::string& r) { return parse_ratio(r).has_value(); });
  synth::SyntheticPool pool;
  if (needs_pool) {
    if (dir && fs::exists(at("pool") / "meta.json")) {
      pool = synth::read_pool(at("pool"));
    } else {
      std::vector<synth::SynthSource> sources;
      for (std::size_t gi = 0; gi < runs.size(); ++gi)
        for (const auto& phase : cfg.synth_phases)
          sources.push_back({&phase_generator(runs[gi], phase), phase, static_cast<int>(gi)});
      const auto masks =
          synth::build_structure_masks(train, cfg.structure_radius_mm, synth::kPhantomSpacingMm);
      synth::SynthConfig sc;
      sc.seed = derive_seed(cfg.seed, kSynthStream);
      sc.post = cfg.post;
      pool = synth::generate_synthetic_dataset(sources, cfg.n_synthetic, masks,
                                               synth::assignment_pool(train), unlabelled_mr, sc);
      if (dir) synth::write_pool(at("pool"), pool);
    }
    out.provenance = pool.provenance_counts();
  }

  const auto real = seg::real_samples(train);
  const auto synthetic = needs_pool ? seg::synthetic_samples(pool) : std::vector<seg::SegSample>{};
  for (const auto& ratio : cfg.ratios) {
    const auto eval_path = dir ? at("eval_" + ratio + ".json") : fs::path{};
    auto& per_set = out.results[ratio];
    if (dir && fs::exists(eval_path)) {
      const auto j = io::read_json(eval_path);
      for (const auto& [name, list] : j.items())
        for (const auto& r : list) per_set[name].push_back(SubjectResult::from_json(r));
      continue;
    }
    const auto model_path = dir ? at("seg_" + ratio + ".ckpt") : fs::path{};
    seg::SegModel model;
    if (dir && fs::exists(model_path)) {
      model = seg::SegModel::load(model_path);
    } else {
      auto seg_cfg = cfg.seg;
      seg_cfg.seed = derive_seed(cfg.seed, kSegStream);
      const auto r = parse_ratio(ratio);
      seg::MixedSampler sampler(real, r ? synthetic : std::vector<seg::SegSample>{}, r,
                                derive_seed(cfg.seed, kSamplerStream),
                                seg_cfg.foreground_fraction, seg_cfg.reflection_augmentation);
      model = seg::train_segnet(seg_cfg, sampler);
      if (dir) model.save(model_path);
    }
    nlohmann::json j = nlohmann::json::object();
    for (const auto& set : eval_sets) {
      per_set[set.name] = evaluate_model(model, set.subjects);
      auto& list = j[set.name] = nlohmann::json::array();
      for (const auto& r : per_set[set.name]) list.push_back(r.to_json());
    }
    if (dir) io::write_json(eval_path, j);
  }
  return out;
}

// --- experiment config -----------------------------------------------------------

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  auto& gan = cfg.cell.gan;
  gan.arch.latent_dim = 64;
  gan.arch.min_channels = 8;
  gan.train.batch_size = 8;
  if (name == "desk") {
    gan.arch.fmap_base = 32;
    gan.arch.max_channels = 32;
    gan.p1 = {6000, 6000};
    gan.p2.images = 16000;
    gan.p3.images = 16000;
    gan.p3.unfreeze_budget = 8000;
    cfg.cell.n_synthetic = 1024;
    cfg.cell.seg.steps = 3000;
    cfg.cell.seg.batch = 32;
    cfg.cell.diversity_samples = 256;
  } else if (name == "smoke") {
    gan.arch.latent_dim = 16;
    gan.arch.fmap_base = 8;
    gan.arch.max_channels = 8;
    gan.arch.min_channels = 4;
    gan.p1 = {32, 32};
    gan.p2.images = 32;
    gan.p2.warmup_cycles = 2;
    gan.p2.warmup_ratio = 2;
    gan.p3.images = 32;
    gan.p3.unfreeze_budget = 16;
    gan.p3.selfteach_multiplier = 1;
    cfg.cell.n_synthetic = 32;
    cfg.cell.seg.steps = 10;
    cfg.cell.seg.batch = 4;
    cfg.cell.diversity_samples = 8;
    cfg.phantoms.n_subjects = 24;
    cfg.phantoms.n_labelled = 6;
    cfg.folds = 2;
    cfg.classifier.repeats = 3;
    cfg.classifier.folds = 2;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or smoke)");
  }
  cfg.preset = name;
}

void ExperimentConfig::validate() const {
  if (generate_phantoms) {
    phantoms.validate();
  } else {
    for (const auto& p : {labelled_dir, unlabelled_dir})
      if (p.empty() || !fs::is_directory(p))
        throw ConfigError("dataset directory does not exist: " + p.string());
  }
  if (folds < 2) throw ConfigError("folds must be >= 2");
  for (int f : run_folds)
    if (f < 0 || f >= folds) throw ConfigError("run_folds entry out of range");
  if (labelled_budgets.empty()) throw ConfigError("labelled_budgets must not be empty");
  for (int b : labelled_budgets)
    if (!kAllowedBudgets.count(b)) throw ConfigError("labelled budget must be one of 1,3,6,12,24");
  for (const auto& r : cell.ratios)
    if (!kAllowedRatios.count(r)) throw ConfigError("ratio must be one of baseline,100,10,2,1");
  if (eval_unlabelled < 0) throw ConfigError("eval_unlabelled must be >= 0");
  if (output_root.empty()) throw ConfigError("output_root is empty");
  cell.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  auto cell_json = cell.to_json();
  cell_json.erase("seed");
  return {{"generate_phantoms", generate_phantoms},
          {"phantoms", phantom_spec_json(phantoms)},
          {"labelled_dir", labelled_dir.string()},
          {"unlabelled_dir", unlabelled_dir.string()},
          {"folds", folds},
          {"run_folds", run_folds},
          {"fold_seed", fold_seed},
          {"labelled_budgets", labelled_budgets},
          {"eval_unlabelled", eval_unlabelled},
          {"preset", preset},
          {"cell", cell_json},
          {"classifier",
           {{"repeats", classifier.repeats},
            {"folds", classifier.folds},
            {"l2", classifier.l2},
            {"seed", classifier.seed}}},
          {"output_root", output_root.string()},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  apply_preset(c, j.value("preset", std::string("desk")));
  c.generate_phantoms = j.value("generate_phantoms", c.generate_phantoms);
  if (j.contains("phantoms")) phantom_spec_update(c.phantoms, j["phantoms"]);
  c.labelled_dir = j.value("labelled_dir", std::string());
  c.unlabelled_dir = j.value("unlabelled_dir", std::string());
  c.folds = j.value("folds", c.folds);
  c.run_folds = j.value("run_folds", c.run_folds);
  c.fold_seed = j.value("fold_seed", c.fold_seed);
  c.labelled_budgets = j.value("labelled_budgets", c.labelled_budgets);
  c.eval_unlabelled = j.value("eval_unlabelled", c.eval_unlabelled);
  if (j.contains("cell")) {
    // Merge over the preset so that partial sections keep preset values.
    auto merged = c.cell.to_json();
    merged.merge_patch(j["cell"]);
    c.cell = CellConfig::from_json(merged);
  }
  if (j.contains("classifier")) {
    const auto& k = j["classifier"];
    c.classifier.repeats = k.value("repeats", c.classifier.repeats);
    c.classifier.folds = k.value("folds", c.classifier.folds);
    c.classifier.l2 = k.value("l2", c.classifier.l2);
    c.classifier.seed = k.value("seed", c.classifier.seed);
  }
  c.output_root = j.value("output_root", default_output_root().string());
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: " + assignment);
  std::string pointer;
  std::stringstream keys(assignment.substr(0, eq));
  for (std::string key; std::getline(keys, key, '.');) pointer += "/" + key;
  const auto text = assignment.substr(eq + 1);
  auto value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  j[nlohmann::json::json_pointer(pointer)] = value;
}

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// --- data ----------------------------------------------------------------------

std::vector<data::LabelledSample> load_subjects(const fs::path& dir) {
  std::vector<data::LabelledSample> out;
  for (const auto& p : io::list_subjects(dir)) out.push_back(io::read_labelled(p));
  if (out.empty()) throw EmptyPool("no subjects under " + dir.string());
  return out;
}

void write_cohort(const fs::path& dir, const phantom::Cohort& cohort) {
  for (const auto& p : cohort.labelled) io::write_labelled(dir / "labelled" / p.sample.subject_id, p.sample);
  for (const auto& p : cohort.unlabelled)
    io::write_labelled(dir / "unlabelled" / p.sample.subject_id, p.sample);
}

// --- runner --------------------------------------------------------------------

nlohmann::json run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto root = cfg.output_root;
  fs::create_directories(root);
  const auto cfg_json = cfg.to_json();
  const auto hash = config_hash(cfg_json);
  Manifest manifest{root / "manifest.json", {}};
  if (fs::exists(manifest.path)) {
    manifest.j = io::read_json(manifest.path);
    if (manifest.j.value("config_hash", "") != hash)
      throw ConfigError("output root holds a run with a different config (hash " +
                        manifest.j.value("config_hash", std::string("?")) + ")");
  } else {
    manifest.j = {{"config", cfg_json},
                  {"config_hash", hash},
                  {"seeds", {{"master", cfg.seed}, {"fold", cfg.fold_seed}}},
                  {"cells", nlohmann::json::object()},
                  {"stages", nlohmann::json::object()}};
    io::write_json(manifest.path, manifest.j);
  }

  fs::path labelled_dir = cfg.labelled_dir, unlabelled_dir = cfg.unlabelled_dir;
  if (cfg.generate_phantoms) {
    labelled_dir = root / "data" / "labelled";
    unlabelled_dir = root / "data" / "unlabelled";
    if (!manifest.j["stages"].contains("phantom-gen")) {
      auto spec = cfg.phantoms;
      spec.seed = derive_seed(cfg.seed, 10);
      write_cohort(root / "data", phantom::generate_cohort(spec));
      manifest.stage("phantom-gen", {{"seed", spec.seed}});
    }
  }
  const auto labelled = load_subjects(labelled_dir);
  const auto unlabelled = load_subjects(unlabelled_dir);
  // Only the MR channel of the unlabelled pool feeds training.
  const auto unlabelled_mr = mr_tensor(unlabelled);
  const std::vector<data::LabelledSample> eval_pool(
      unlabelled.begin(),
      unlabelled.begin() + std::min<std::size_t>(cfg.eval_unlabelled, unlabelled.size()));

  std::vector<std::string> ids;
  std::map<std::string, const data::LabelledSample*> by_id;
  for (const auto& s : labelled) {
    ids.push_back(s.subject_id);
    by_id[s.subject_id] = &s;
  }
  const auto folds = eval::make_folds(ids, cfg.folds, cfg.fold_seed);
  std::vector<int> run_folds = cfg.run_folds;
  if (run_folds.empty())
    for (int f = 0; f < cfg.folds; ++f) run_folds.push_back(f);

  for (int f : run_folds) {
    for (int budget : cfg.labelled_budgets) {
      const auto cell_name = "fold" + std::to_string(f) + "/budget" + std::to_string(budget);
      const auto split = data::with_labelled_budget(folds[f], budget, derive_seed(cfg.fold_seed, f));
      std::vector<data::LabelledSample> train;
      for (const auto& id : split.labelled_subset) train.push_back(*by_id.at(id));
      std::vector<EvalSet> sets{{"test", {}}};
      for (const auto& id : split.test_ids) sets[0].subjects.push_back(*by_id.at(id));
      if (!eval_pool.empty()) sets.push_back({"unlabelled", eval_pool});

      auto cell = cfg.cell;
      cell.seed = derive_seed(cfg.seed, 1000 * static_cast<std::uint64_t>(f) + budget);
      manifest.j["cells"][cell_name] = {{"seed", cell.seed},
                                        {"train", split.labelled_subset},
                                        {"test", split.test_ids}};
      const auto dir = root / ("fold" + std::to_string(f)) / ("budget" + std::to_string(budget));
      try {
        const auto result = run_cell(train, unlabelled_mr, sets, cell, dir);
        io::write_json(dir / "cell.json",
                       {{"fold", f},
                        {"budget", budget},
                        {"seed", cell.seed},
                        {"train", split.labelled_subset},
                        {"diversity", result.diversity},
                        {"provenance", result.provenance},
                        {"ratios", cfg.cell.ratios}});
      } catch (const std::exception& e) {
        manifest.stage(cell_name, {{"status", "failed"}, {"error", e.what()}});
        throw;
      }
      manifest.stage(cell_name, {{"status", "done"}, {"dir", fs::relative(dir, root).string()}});
    }
  }
  auto summary = report(root);
  manifest.stage("report", {{"status", "done"}});
  return summary;
}

// --- report --------------------------------------------------------------------

nlohmann::json report(const fs::path& root) {
  struct Row {
    int budget;
    std::string ratio;
    std::map<std::string, std::vector<SubjectResult>> sets;
  };
  std::vector<Row> rows;
  if (fs::is_directory(root)) {
    std::vector<fs::path> cells;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.path().filename() == "cell.json") cells.push_back(e.path());
    std::sort(cells.begin(), cells.end());
    std::map<std::pair<int, std::string>, std::size_t> index;
    for (const auto& c : cells) {
      const auto meta = io::read_json(c);
      const int budget = meta.at("budget").get<int>();
      for (const auto& ratio : meta.at("ratios")) {
        const auto r = ratio.get<std::string>();
        const auto eval_path = c.parent_path() / ("eval_" + r + ".json");
        if (!fs::exists(eval_path)) continue;
        const auto key = std::make_pair(budget, r);
        if (!index.count(key)) {
          index[key] = rows.size();
          rows.push_back({budget, r, {}});
        }
        auto& row = rows[index[key]];
        const auto stored = io::read_json(eval_path);
        for (const auto& [name, list] : stored.items())
          for (const auto& s : list) row.sets[name].push_back(SubjectResult::from_json(s));
      }
    }
  }
  if (rows.empty()) throw MissingResults("no evaluation results under " + root.string());
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    const auto ra = parse_ratio(a.ratio), rb = parse_ratio(b.ratio);
    // Baseline first, then decreasing r (increasing synthetic share).
    return std::make_tuple(a.budget, ra.has_value(), -ra.value_or(0)) <
           std::make_tuple(b.budget, rb.has_value(), -rb.value_or(0));
  });

  const auto out = root / "results";
  fs::create_directories(out);
  nlohmann::json summary = nlohmann::json::object();
  std::set<std::string> set_names;
  for (const auto& r : rows)
    for (const auto& [name, _] : r.sets) set_names.insert(name);

  auto label = [](const Row& r) { return "b" + std::to_string(r.budget) + "/" + r.ratio; };
  for (const auto& name : set_names) {
    std::string csv = eval::dsc_table_header() + "\n";
    std::vector<std::string> bar_labels;
    std::vector<double> bar_values;
    for (const auto& r : rows) {
      const auto it = r.sets.find(name);
      if (it == r.sets.end()) continue;
      std::vector<eval::DscReport> reports;
      for (const auto& s : it->second) reports.push_back(s.dsc);
      csv += eval::dsc_table_row(label(r), reports) + "\n";
      double mean = 0.0;
      for (const auto& d : reports) mean += d.overall;
      mean /= reports.size();
      bar_labels.push_back(label(r));
      bar_values.push_back(mean);
      summary["overall_dsc"][name][label(r)] = mean;
    }
    io::write_text(out / ("dsc_" + name + ".csv"), csv);
    eval::write_bar_chart_svg(out / ("ratio_study_" + name + ".svg"), "Overall DSC (" + name + ")",
                              "DSC", bar_labels, bar_values);
  }

  // Covariate curves and classification use the largest non-test set when present.
  const std::string cov_set = set_names.count("unlabelled") ? "unlabelled" : "test";
  std::vector<eval::Series> age_series, cdr_series;
  for (const auto& r : rows) {
    const auto it = r.sets.find(cov_set);
    if (it == r.sets.end() || it->second.size() < 2) continue;
    std::vector<double> age, cdr, d;
    for (const auto& s : it->second) {
      age.push_back(s.dsc.age);
      cdr.push_back(data::cdr_value(s.dsc.cdr));
      d.push_back(s.dsc.overall);
    }
    const auto ca = eval::kernel_regression(age, d, eval::default_bandwidth(age), 18, 96, 79);
    const auto cc = eval::kernel_regression(cdr, d, 0.25, 0, 2, 41);
    age_series.push_back({label(r), ca.x, ca.y});
    cdr_series.push_back({label(r), cc.x, cc.y});
  }
  if (!age_series.empty()) {
    eval::write_line_plot_svg(out / "dsc_vs_age.svg", "Overall DSC vs age", "age", "DSC", age_series);
    eval::write_line_plot_svg(out / "dsc_vs_cdr.svg", "Overall DSC vs CDR", "CDR", "DSC", cdr_series);
  }

  // CDR 0.5 vs CDR >= 1 from segmented volumes; significance against the
  // baseline of the same budget via a paired t-test over repeat AUCs.
  std::string cls = "label,accuracy,accuracy_sd,auc,auc_sd,p_vs_baseline,significant\n";
  std::map<int, std::vector<double>> baseline_auc;
  eval::ClassifierConfig ccfg;
  if (fs::exists(root / "manifest.json")) {
    const auto m = io::read_json(root / "manifest.json");
    if (m.contains("config") && m["config"].contains("classifier")) {
      const auto& k = m["config"]["classifier"];
      ccfg.repeats = k.value("repeats", ccfg.repeats);
      ccfg.folds = k.value("folds", ccfg.folds);
      ccfg.l2 = k.value("l2", ccfg.l2);
      ccfg.seed = k.value("seed", ccfg.seed);
    }
  }
  auto classify = [&](const std::vector<SubjectResult>& subjects, bool reference)
      -> std::optional<eval::ClassifierResult> {
    std::vector<eval::Features> x;
    std::vector<int> y;
    for (const auto& s : subjects) {
      if (s.dsc.cdr == data::Cdr::k0) continue;
      x.push_back(reference ? s.reference_volumes : s.predicted_volumes);
      y.push_back(eval::cdr_positive(s.dsc.cdr));
    }
    try {
      return eval::classify_cdr(x, y, ccfg);
    } catch (const DegenerateClass&) {
      return std::nullopt;
    }
  };
  for (const auto& r : rows) {
    const auto it = r.sets.find(cov_set);
    if (it == r.sets.end()) continue;
    const auto res = classify(it->second, false);
    if (!res) {
      cls += label(r) + ",,,,,,insufficient\n";
      continue;
    }
    std::string p = "", sig = "";
    if (r.ratio == "baseline") {
      baseline_auc[r.budget] = res->repeat_auc;
    } else if (baseline_auc.count(r.budget)) {
      try {
        const auto t = eval::paired_ttest(res->repeat_auc, baseline_auc[r.budget]);
        p = fixed(t.p, 4);
        sig = t.significant ? "yes" : "no";
      } catch (const DegenerateVariance&) {
        sig = "constant";
      }
    }
    cls += label(r) + "," + fixed(res->accuracy, 2) + "," + fixed(res->accuracy_sd, 2) + "," +
           fixed(res->auc, 4) + "," + fixed(res->auc_sd, 4) + "," + p + "," + sig + "\n";
    summary["classification"][label(r)] = res->to_json();
  }
  if (const auto it = rows.front().sets.find(cov_set); it != rows.front().sets.end()) {
    if (const auto ref = classify(it->second, true)) {
      cls += "reference," + fixed(ref->accuracy, 2) + "," + fixed(ref->accuracy_sd, 2) + "," +
             fixed(ref->auc, 4) + "," + fixed(ref->auc_sd, 4) + ",,\n";
      summary["classification"]["reference"] = ref->to_json();
    }
  }
  io::write_text(out / "classification.csv", cls);
  io::write_json(out / "summary.json", summary);
  return summary;
}

}  // namespace gansfer::experiment
