#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "gansfer/evaluation.hpp"
#include "gansfer/phantom.hpp"
#include "gansfer/phases.hpp"
#include "gansfer/segmenter.hpp"
#include "gansfer/synth.hpp"

namespace gansfer::experiment {

namespace fs = std::filesystem;

/// Process exit codes shared by the CLI and the acceptance runner.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitStageFailure = 3,
  kExitAcceptanceFailure = 4,
};

/// Output root from GANSFER_OUTPUT_ROOT, else `fallback`.
fs::path default_output_root(const fs::path& fallback = "gansfer_out");

/// Parses "baseline" or a positive integer ratio.
std::optional<int> parse_ratio(const std::string& ratio);

/// Everything one (fold, budget) cell needs besides its data.
struct CellConfig {
  phases::GansferConfig gan;
  /// Phases whose generators feed the synthetic pool ("p1", "p2", "p3").
  std::vector<std::string> synth_phases{"p2", "p3"};
  int n_synthetic = 1024;
  double structure_radius_mm = 10.0;
  synth::PostprocessConfig post;
  seg::SegNetConfig seg;
  std::vector<std::string> ratios{"baseline", "1"};
  /// Generated MR channels per diversity estimate (0 skips it).
  int diversity_samples = 256;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static CellConfig from_json(const nlohmann::json& j);
};

/// A named group of subjects with ground truth, used only for evaluation.
struct EvalSet {
  std::string name;
  std::vector<data::LabelledSample> subjects;
};

struct SubjectResult {
  eval::DscReport dsc;
  eval::Features predicted_volumes{};
  eval::Features reference_volumes{};

  nlohmann::json to_json() const;
  static SubjectResult from_json(const nlohmann::json& j);
};

/// Segments every subject and scores it against its own labels.
std::vector<SubjectResult> evaluate_model(const seg::SegModel& model,
                                          const std::vector<data::LabelledSample>& subjects);

struct CellResult {
  nlohmann::json gan_metrics = nlohmann::json::array();
  /// Per GAN run: diversity of the p1/p2/p3 generators.
  nlohmann::json diversity = nlohmann::json::array();
  nlohmann::json provenance = nlohmann::json::object();
  /// ratio -> eval set -> per-subject results.
  std::map<std::string, std::map<std::string, std::vector<SubjectResult>>> results;
};

/// GANsfer (multi-GAN for 12/24 labelled subjects), synthesis, one segmenter
/// per ratio and evaluation. With `dir` set every stage is checkpointed there
/// and finished stages are reused.
CellResult run_cell(const std::vector<data::LabelledSample>& train,
                    const torch::Tensor& unlabelled_mr, const std::vector<EvalSet>& eval_sets,
                    const CellConfig& cfg, const std::optional<fs::path>& dir = {});

/// Normalized MR slices of every subject as an (N, 1, R, R) tensor.
torch::Tensor mr_tensor(const std::vector<data::LabelledSample>& subjects);
/// GAN training slices of every subject as an (N, 8, R, R) tensor.
torch::Tensor labelled_tensor(const std::vector<data::LabelledSample>& subjects);

/// Declarative experiment matrix.
struct ExperimentConfig {
  /// Generate phantoms under `<output_root>/data`; otherwise read the
  /// dataset directories below.
  bool generate_phantoms = true;
  phantom::PhantomSpec phantoms;
  fs::path labelled_dir;
  fs::path unlabelled_dir;

  int folds = 5;
  /// Fold indices to run; empty runs all of them.
  std::vector<int> run_folds;
  std::uint64_t fold_seed = 0;
  std::vector<int> labelled_budgets{1};
  /// Unlabelled subjects also segmented for covariate curves and
  /// classification.
  int eval_unlabelled = 0;

  /// "desk" or "smoke"; applied before explicit fields.
  std::string preset = "desk";
  CellConfig cell;
  eval::ClassifierConfig classifier;

  fs::path output_root;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Applies the preset named in `j` (if any) and then the explicit fields.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Stage budgets and architecture for a named preset.
void apply_preset(ExperimentConfig& cfg, const std::string& name);

/// Sets the value at a dotted path ("cell.seg.steps") from text; the text is
/// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Hex FNV-1a of the canonical JSON dump.
std::string config_hash(const nlohmann::json& j);

/// Runs the full matrix under cfg.output_root and writes a manifest, per-cell
/// results and the report. Rerunning skips finished stages.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

/// Tables and plots from the results under `root`; throws MissingResults.
nlohmann::json report(const fs::path& root);

/// Loads every subject directory below `dir`.
std::vector<data::LabelledSample> load_subjects(const fs::path& dir);
/// Writes phantoms as labelled/ and unlabelled/ below `dir`.
void write_cohort(const fs::path& dir, const phantom::Cohort& cohort);

}  // namespace gansfer::experiment
