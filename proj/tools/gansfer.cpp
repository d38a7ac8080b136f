#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "gansfer/checkpoint.hpp"
#include "gansfer/dataset_io.hpp"
#include "gansfer/errors.hpp"
#include "gansfer/experiment.hpp"

using namespace gansfer;
namespace fs = std::filesystem;
namespace ex = gansfer::experiment;

namespace {

struct Common {
  std::string root;
  std::vector<std::string> overrides;
};

fs::path under(const Common& c, const std::string& given, const std::string& fallback) {
  return given.empty() ? fs::path(c.root) / fallback : fs::path(given);
}

nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    j = io::read_json(path);
  }
  for (const auto& o : overrides) ex::apply_override(j, o);
  return j;
}

ex::ExperimentConfig preset(const std::string& name) {
  ex::ExperimentConfig c;
  ex::apply_preset(c, name);
  return c;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// Preprocessed cell inputs: GAN slices of the labelled subset, their axial
// indices and the unlabelled MR slices.
struct Prepared {
  torch::Tensor labelled, labelled_z, unlabelled;
  fs::path data_dir;
  std::vector<std::string> labelled_ids;

  static Prepared load(const fs::path& path) {
    const auto ck = Checkpoint::load(path);
    return {ck.tensor("labelled"), ck.tensor("labelled_z"), ck.tensor("unlabelled"),
            ck.meta.at("data_dir").get<std::string>(),
            ck.meta.at("labelled_ids").get<std::vector<std::string>>()};
  }

  std::vector<data::LabelledSample> subjects() const {
    std::vector<data::LabelledSample> out;
    for (const auto& id : labelled_ids) out.push_back(io::read_labelled(data_dir / "labelled" / id));
    return out;
  }
};

std::vector<data::IndexedSlice<float>> assignment_from(const Prepared& p) {
  std::vector<data::IndexedSlice<float>> out;
  const auto mr = p.labelled.narrow(1, 0, 1).contiguous();
  const int res = static_cast<int>(mr.size(2));
  for (std::int64_t i = 0; i < mr.size(0); ++i) {
    Image im(res, res);
    std::copy(mr[i].data_ptr<float>(), mr[i].data_ptr<float>() + im.size(), im.storage().begin());
    out.push_back({static_cast<int>(p.labelled_z[i].item<std::int64_t>()), std::move(im)});
  }
  return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"GANsfer learning pipeline on phantom cohorts"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  common.root = ex::default_output_root().string();
  app.add_option("--root", common.root, "Output root (default: $GANSFER_OUTPUT_ROOT or ./gansfer_out)");

  // phantom-gen
  auto* pg = app.add_subcommand("phantom-gen", "Generate a phantom cohort");
  std::string pg_out;
  phantom::PhantomSpec spec;
  pg->add_option("--out", pg_out, "Dataset directory (default <root>/data)");
  pg->add_option("--n-unlabelled", spec.n_subjects, "Unlabelled subjects");
  pg->add_option("--n-labelled", spec.n_labelled, "Labelled (young, healthy) subjects");
  pg->add_option("--seed", spec.seed, "Cohort seed");
  pg->add_option("--noise", spec.noise_sigma, "Noise sigma");

  // preprocess
  auto* pp = app.add_subcommand("preprocess", "Build GAN training tensors for a labelled subset");
  std::string pp_data, pp_out, pp_ids;
  int pp_budget = 0;
  pp->add_option("--data", pp_data, "Dataset directory (default <root>/data)");
  pp->add_option("--ids", pp_ids, "Comma-separated labelled subject ids");
  pp->add_option("--budget", pp_budget, "Take the first N labelled subjects by name");
  pp->add_option("--out", pp_out, "Output file (default <root>/prep.ckpt)");

  // train-gan
  auto* tg = app.add_subcommand("train-gan", "Run GANsfer phases");
  std::string tg_prep, tg_out, tg_phase = "all", tg_config, tg_preset = "desk";
  tg->add_option("--prep", tg_prep, "Preprocessed inputs (default <root>/prep.ckpt)");
  tg->add_option("--phase", tg_phase, "1, 2, 3 or all")->check(CLI::IsMember({"1", "2", "3", "all"}));
  tg->add_option("--config", tg_config, "GANsfer config JSON");
  tg->add_option("--preset", tg_preset, "desk or smoke");
  tg->add_option("--set", common.overrides, "key.path=value override");
  tg->add_option("--out", tg_out, "Checkpoint directory (default <root>/gan)");

  // synth
  auto* sy = app.add_subcommand("synth", "Sample generators into a raw synthetic pool");
  std::vector<std::string> sy_gans;
  std::string sy_prep, sy_out, sy_phases = "p2,p3";
  int sy_n = 1024;
  std::uint64_t sy_seed = 0;
  sy->add_option("--gan", sy_gans, "GAN checkpoint directories (one per gan_id)");
  sy->add_option("--phases", sy_phases, "Comma-separated phases to sample");
  sy->add_option("--prep", sy_prep, "Preprocessed inputs (default <root>/prep.ckpt)");
  sy->add_option("--n", sy_n, "Samples in total");
  sy->add_option("--seed", sy_seed, "Latent seed");
  sy->add_option("--out", sy_out, "Pool directory (default <root>/pool_raw)");

  // postprocess
  auto* po = app.add_subcommand("postprocess", "Binarize and repair synthetic segmentations");
  std::string po_pool, po_prep, po_out;
  double po_radius = 10.0;
  synth::PostprocessConfig po_cfg;
  po->add_option("--pool", po_pool, "Raw pool (default <root>/pool_raw)");
  po->add_option("--prep", po_prep, "Preprocessed inputs (default <root>/prep.ckpt)");
  po->add_option("--radius-mm", po_radius, "Structure mask dilation radius");
  po->add_option("--min-area", po_cfg.min_component_area, "Smallest kept component");
  po->add_option("--out", po_out, "Pool directory (default <root>/pool_post)");

  // filter
  auto* fi = app.add_subcommand("filter", "Score synthetic samples and drop the worst quartile");
  std::string fi_pool, fi_prep, fi_out;
  fi->add_option("--pool", fi_pool, "Postprocessed pool (default <root>/pool_post)");
  fi->add_option("--prep", fi_prep, "Preprocessed inputs (default <root>/prep.ckpt)");
  fi->add_option("--out", fi_out, "Pool directory (default <root>/pool)");

  // train-seg
  auto* ts = app.add_subcommand("train-seg", "Train the segmenter on real plus synthetic data");
  std::string ts_prep, ts_pool, ts_ratio = "baseline", ts_config, ts_out, ts_preset = "desk";
  ts->add_option("--prep", ts_prep, "Preprocessed inputs (default <root>/prep.ckpt)");
  ts->add_option("--pool", ts_pool, "Filtered pool (default <root>/pool)");
  ts->add_option("--ratio", ts_ratio, "baseline, 100, 10, 2 or 1")
      ->check(CLI::IsMember({"baseline", "100", "10", "2", "1"}));
  ts->add_option("--config", ts_config, "Segmenter config JSON");
  ts->add_option("--preset", ts_preset, "desk or smoke");
  ts->add_option("--set", common.overrides, "key.path=value override");
  ts->add_option("--out", ts_out, "Model file (default <root>/seg_<ratio>.ckpt)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Segment subjects and report DSC");
  std::string ev_model, ev_data, ev_out;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Directory of subject directories")->required();
  ev->add_option("--out", ev_out, "Result JSON (default <root>/eval.json)");

  // classify
  auto* cl = app.add_subcommand("classify", "CDR 0.5 vs 1+ from segmented volumes");
  std::string cl_eval, cl_out;
  bool cl_reference = false;
  eval::ClassifierConfig cl_cfg;
  cl->add_option("--eval", cl_eval, "Result JSON from evaluate")->required();
  cl->add_flag("--reference", cl_reference, "Use ground-truth volumes");
  cl->add_option("--repeats", cl_cfg.repeats, "Cross-validation repeats");
  cl->add_option("--folds", cl_cfg.folds, "Folds per repeat");
  cl->add_option("--seed", cl_cfg.seed, "Fold seed");
  cl->add_option("--out", cl_out, "Result JSON (default <root>/classify.json)");

  // report
  auto* rp = app.add_subcommand("report", "Tables and plots from an experiment tree");

  // run
  auto* rn = app.add_subcommand("run", "Run an experiment matrix from a config file");
  std::string rn_config;
  rn->add_option("--config", rn_config, "Experiment config JSON");
  rn->add_option("--set", common.overrides, "key.path=value override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ex::kExitOk : ex::kExitConfigError;
  }

  try {
    if (*pg) {
      const auto out = under(common, pg_out, "data");
      spec.validate();
      ex::write_cohort(out, phantom::generate_cohort(spec));
      std::cout << "wrote " << spec.n_labelled << " labelled and " << spec.n_subjects
                << " unlabelled phantoms to " << out << "\n";
    } else if (*pp) {
      const auto data_dir = under(common, pp_data, "data");
      std::vector<std::string> ids = split_csv(pp_ids);
      if (ids.empty()) {
        for (const auto& p : io::list_subjects(data_dir / "labelled"))
          ids.push_back(p.filename().string());
        if (pp_budget > 0) {
          if (pp_budget > static_cast<int>(ids.size())) throw BadBudget("budget exceeds labelled pool");
          ids.resize(pp_budget);
        }
      }
      if (ids.empty()) throw ConfigError("no labelled subjects selected");
      std::vector<data::LabelledSample> labelled;
      for (const auto& id : ids) labelled.push_back(io::read_labelled(data_dir / "labelled" / id));
      const auto unlabelled = ex::load_subjects(data_dir / "unlabelled");
      Checkpoint ck;
      std::vector<data::MultiChannelSlice> slices;
      std::vector<std::int64_t> z;
      for (const auto& s : labelled)
        for (auto& sl : data::to_gan_slices(s)) {
          z.push_back(sl.slice_index);
          slices.push_back(std::move(sl));
        }
      ck.add("labelled", phases::slices_to_tensor(slices));
      ck.add("labelled_z", torch::tensor(z, torch::kInt64));
      // MR channel only: unlabelled masks never leave the dataset directory.
      ck.add("unlabelled", ex::mr_tensor(unlabelled));
      ck.meta = {{"data_dir", fs::absolute(data_dir).string()}, {"labelled_ids", ids}};
      const auto out = under(common, pp_out, "prep.ckpt");
      fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
      ck.save(out);
      std::cout << "wrote " << out << "\n";
    } else if (*tg) {
      auto j = preset(tg_preset).cell.gan.to_json();
      j.merge_patch(load_config(tg_config, common.overrides));
      const auto cfg = phases::GansferConfig::from_json(j);
      const auto prep = Prepared::load(under(common, tg_prep, "prep.ckpt"));
      const auto dir = under(common, tg_out, "gan");
      fs::create_directories(dir);
      auto path = [&](int k) { return dir / ("p" + std::to_string(k) + ".ckpt"); };
      auto finish = [&](const phases::PhaseState& st, int k) {
        phases::save_state(st, path(k));
        io::write_json(dir / ("p" + std::to_string(k) + "_metrics.json"),
                       st.metrics["p" + std::to_string(k)]);
        std::cout << "phase " << k << " done: " << path(k) << "\n";
      };
      const bool all = tg_phase == "all";
      std::optional<phases::PhaseState> st;
      if (all || tg_phase == "1") {
        st.emplace(phases::run_phase1(prep.labelled, cfg));
        finish(*st, 1);
      }
      if (all || tg_phase == "2") {
        if (!st) st.emplace(phases::load_state(path(1)));
        phases::run_phase2(*st, prep.unlabelled, cfg);
        finish(*st, 2);
      }
      if (all || tg_phase == "3") {
        if (!st) st.emplace(phases::load_state(path(2)));
        auto set = phases::build_selfteach_set(*st, prep.labelled, cfg);
        phases::run_phase3(*st, prep.unlabelled, set, cfg);
        finish(*st, 3);
      }
    } else if (*sy) {
      const auto prep = Prepared::load(under(common, sy_prep, "prep.ckpt"));
      if (sy_gans.empty()) sy_gans.push_back((fs::path(common.root) / "gan").string());
      std::vector<phases::PhaseState> states;
      std::vector<synth::SynthSource> sources;
      const auto phase_list = split_csv(sy_phases);
      for (std::size_t gi = 0; gi < sy_gans.size(); ++gi)
        for (const auto& ph : phase_list) {
          if (ph != "p1" && ph != "p2" && ph != "p3") throw ConfigError("unknown phase " + ph);
          states.push_back(phases::load_state(fs::path(sy_gans[gi]) / (ph + ".ckpt")));
        }
      std::size_t k = 0;
      for (std::size_t gi = 0; gi < sy_gans.size(); ++gi)
        for (const auto& ph : phase_list)
          sources.push_back({&states[k++].generator, ph, static_cast<int>(gi)});
      synth::SynthConfig sc;
      sc.seed = sy_seed;
      const auto pool = synth::generate_raw(sources, sy_n, assignment_from(prep), sc);
      const auto out = under(common, sy_out, "pool_raw");
      synth::write_pool(out, pool);
      std::cout << "wrote " << pool.samples.size() << " samples to " << out << "\n";
    } else if (*po) {
      const auto prep = Prepared::load(under(common, po_prep, "prep.ckpt"));
      auto pool = synth::read_pool(under(common, po_pool, "pool_raw"));
      const auto masks =
          synth::build_structure_masks(prep.subjects(), po_radius, synth::kPhantomSpacingMm);
      synth::postprocess_pool(pool, masks, po_cfg);
      const auto out = under(common, po_out, "pool_post");
      synth::write_pool(out, pool);
      std::cout << "postprocessed " << pool.samples.size() << " samples into " << out << "\n";
    } else if (*fi) {
      const auto prep = Prepared::load(under(common, fi_prep, "prep.ckpt"));
      auto pool = synth::read_pool(under(common, fi_pool, "pool_post"));
      synth::score_and_filter(pool, prep.unlabelled);
      const auto out = under(common, fi_out, "pool");
      synth::write_pool(out, pool);
      std::cout << "kept " << pool.kept().size() << " of " << pool.samples.size() << "; provenance "
                << pool.provenance_counts().dump() << "\n";
    } else if (*ts) {
      auto j = preset(ts_preset).cell.seg.to_json();
      j.merge_patch(load_config(ts_config, common.overrides));
      const auto cfg = seg::SegNetConfig::from_json(j);
      const auto prep = Prepared::load(under(common, ts_prep, "prep.ckpt"));
      const auto ratio = ex::parse_ratio(ts_ratio);
      std::vector<seg::SegSample> synthetic;
      if (ratio) synthetic = seg::synthetic_samples(synth::read_pool(under(common, ts_pool, "pool")));
      seg::MixedSampler sampler(seg::real_samples(prep.subjects()), synthetic, ratio, cfg.seed,
                                cfg.foreground_fraction, cfg.reflection_augmentation);
      const auto model = seg::train_segnet(cfg, sampler);
      const auto out = under(common, ts_out, "seg_" + ts_ratio + ".ckpt");
      fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
      model.save(out);
      io::write_json(fs::path(out).replace_extension(".loss.json"), model.loss_curve);
      std::cout << "wrote " << out << "\n";
    } else if (*ev) {
      const auto model = seg::SegModel::load(ev_model);
      const auto results = ex::evaluate_model(model, ex::load_subjects(ev_data));
      nlohmann::json j = nlohmann::json::array();
      std::vector<eval::DscReport> reports;
      for (const auto& r : results) {
        j.push_back(r.to_json());
        reports.push_back(r.dsc);
      }
      io::write_json(under(common, ev_out, "eval.json"), j);
      std::cout << eval::dsc_table_header() << "\n"
                << eval::dsc_table_row(fs::path(ev_model).stem().string(), reports) << "\n";
    } else if (*cl) {
      const auto j = io::read_json(cl_eval);
      std::vector<eval::Features> x;
      std::vector<int> y;
      for (const auto& item : j) {
        const auto r = ex::SubjectResult::from_json(item);
        if (r.dsc.cdr == data::Cdr::k0) continue;
        x.push_back(cl_reference ? r.reference_volumes : r.predicted_volumes);
        y.push_back(eval::cdr_positive(r.dsc.cdr));
      }
      const auto res = eval::classify_cdr(x, y, cl_cfg);
      io::write_json(under(common, cl_out, "classify.json"), res.to_json());
      std::cout << "accuracy " << res.accuracy << " +/- " << res.accuracy_sd << "  auc " << res.auc
                << " +/- " << res.auc_sd << "\n";
    } else if (*rp) {
      print_json(ex::report(common.root));
    } else if (*rn) {
      auto j = load_config(rn_config, common.overrides);
      if (!j.contains("output_root")) j["output_root"] = common.root;
      print_json(ex::run_experiment(ex::ExperimentConfig::from_json(j)));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ex::kExitConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ex::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return ex::kExitStageFailure;
  }
  return ex::kExitOk;
}
