#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gansfer/dataset_io.hpp"
#include "gansfer/errors.hpp"
#include "gansfer/experiment.hpp"

using namespace gansfer;
using namespace gansfer::experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json smoke_json(const fs::path& root) {
  return {{"preset", "smoke"},
          {"labelled_budgets", {1}},
          {"run_folds", {0}},
          {"eval_unlabelled", 4},
          {"cell", {{"ratios", {"baseline", "1"}}}},
          {"output_root", root.string()}};
}

}  // namespace

TEST(Ratio, Parse) {
  EXPECT_FALSE(parse_ratio("baseline").has_value());
  EXPECT_EQ(parse_ratio("10"), 10);
  EXPECT_THROW(parse_ratio("0"), ConfigError);
  EXPECT_THROW(parse_ratio("2x"), ConfigError);
  EXPECT_THROW(parse_ratio("half"), ConfigError);
}

TEST(Override, DottedPathsAndValueTypes) {
  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "cell.seg.steps=12");
  apply_override(j, "preset=smoke");
  apply_override(j, "labelled_budgets=[1,12]");
  EXPECT_EQ(j["cell"]["seg"]["steps"], 12);
  EXPECT_EQ(j["preset"], "smoke");
  EXPECT_EQ(j["labelled_budgets"], nlohmann::json({1, 12}));
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
}

TEST(ExperimentConfig, RoundTripAndValidation) {
  const auto root = fs::temp_directory_path() / "gansfer_cfg";
  const auto cfg = ExperimentConfig::from_json(smoke_json(root));
  EXPECT_EQ(cfg.preset, "smoke");
  EXPECT_EQ(cfg.cell.seg.steps, 10);
  const auto again = ExperimentConfig::from_json(cfg.to_json());
  EXPECT_EQ(again.to_json(), cfg.to_json());
  EXPECT_EQ(config_hash(again.to_json()), config_hash(cfg.to_json()));

  auto bad = smoke_json(root);
  bad["labelled_budgets"] = {5};
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = smoke_json(root);
  bad["labelled_budgets"] = nlohmann::json::array();
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = smoke_json(root);
  bad["cell"]["ratios"] = {"3"};
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = smoke_json(root);
  bad["generate_phantoms"] = false;
  bad["labelled_dir"] = "/nonexistent/labelled";
  bad["unlabelled_dir"] = "/nonexistent/unlabelled";
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = smoke_json(root);
  bad["preset"] = "huge";
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
}

TEST(ExperimentConfig, OutputRootFromEnvironment) {
  setenv("GANSFER_OUTPUT_ROOT", "/tmp/gansfer_env_root", 1);
  EXPECT_EQ(default_output_root(), fs::path("/tmp/gansfer_env_root"));
  unsetenv("GANSFER_OUTPUT_ROOT");
  EXPECT_EQ(default_output_root("x"), fs::path("x"));
}

TEST(Report, EmptyTreeIsMissingResults) {
  const auto root = fs::temp_directory_path() / "gansfer_empty_tree";
  fs::create_directories(root);
  EXPECT_THROW(report(root), MissingResults);
  fs::remove_all(root);
}

TEST(RunExperiment, MinimalMatrixAndIdempotentResume) {
  const auto root = fs::temp_directory_path() / "gansfer_run_minimal";
  fs::remove_all(root);
  const auto cfg = ExperimentConfig::from_json(smoke_json(root));
  const auto summary = run_experiment(cfg);

  const auto cell = root / "fold0" / "budget1";
  EXPECT_TRUE(fs::exists(cell / "gan" / "p3.ckpt"));
  EXPECT_FALSE(fs::exists(cell / "gan" / "gan1"));
  EXPECT_TRUE(fs::exists(cell / "seg_baseline.ckpt"));
  EXPECT_TRUE(fs::exists(cell / "seg_1.ckpt"));
  const auto table = slurp(root / "results" / "dsc_test.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), eval::dsc_table_header());
  EXPECT_NE(table.find("b1/baseline,"), std::string::npos);
  EXPECT_NE(table.find("b1/1,"), std::string::npos);

  const auto manifest = io::read_json(root / "manifest.json");
  EXPECT_EQ(manifest["config_hash"], config_hash(cfg.to_json()));
  EXPECT_EQ(manifest["stages"]["fold0/budget1"]["status"], "done");
  EXPECT_TRUE(manifest["cells"]["fold0/budget1"].contains("seed"));

  // Test-fold subjects never appear in the training set.
  const auto& c = manifest["cells"]["fold0/budget1"];
  for (const auto& id : c["train"])
    EXPECT_EQ(std::count(c["test"].begin(), c["test"].end(), id), 0);

  const auto stamp = fs::last_write_time(cell / "seg_1.ckpt");
  const auto again = run_experiment(cfg);
  EXPECT_EQ(fs::last_write_time(cell / "seg_1.ckpt"), stamp);
  EXPECT_EQ(slurp(root / "results" / "dsc_test.csv"), table);
  EXPECT_EQ(again, summary);

  auto other = cfg;
  other.cell.seg.steps = 11;
  EXPECT_THROW(run_experiment(other), ConfigError);
  fs::remove_all(root);
}

TEST(RunExperiment, BudgetTwelveTrainsTwoGans) {
  const auto root = fs::temp_directory_path() / "gansfer_run_twelve";
  fs::remove_all(root);
  auto j = smoke_json(root);
  j["labelled_budgets"] = {12};
  j["phantoms"] = {{"n_labelled", 26}, {"n_subjects", 12}};
  j["cell"]["ratios"] = {"1"};
  j["eval_unlabelled"] = 0;
  run_experiment(ExperimentConfig::from_json(j));
  const auto cell = root / "fold0" / "budget12";
  EXPECT_TRUE(fs::exists(cell / "gan" / "gan0" / "p3.ckpt"));
  EXPECT_TRUE(fs::exists(cell / "gan" / "gan1" / "p3.ckpt"));
  EXPECT_FALSE(fs::exists(cell / "gan" / "gan2"));
  const auto meta = io::read_json(cell / "cell.json");
  EXPECT_EQ(meta["diversity"].size(), 2u);
  for (const char* key : {"p2/gan0", "p2/gan1", "p3/gan0", "p3/gan1"})
    EXPECT_GT(meta["provenance"].value(key, 0), 0) << key;
  fs::remove_all(root);
}
