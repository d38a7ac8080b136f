#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gansfer/data_model.hpp"

namespace gansfer::eval {

// --- overlap ------------------------------------------------------------------

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dsc(const Mask& a, const Mask& b);
double dsc(const MaskVolume& a, const MaskVolume& b);

struct DscReport {
  std::array<double, data::kNumStructures> per_structure{};
  /// All seven structures merged into one foreground.
  double overall = 0.0;
  /// Mean of the per-structure values.
  double mean = 0.0;
  std::string subject_id;
  double age = 0.0;
  data::Cdr cdr = data::Cdr::k0;

  nlohmann::json to_json() const;
};

DscReport dsc_report(const Mask& pred, const Mask& ref);
DscReport dsc_report(const MaskVolume& pred, const MaskVolume& ref,
                     const std::string& subject_id = {}, double age = 0.0,
                     data::Cdr cdr = data::Cdr::k0);

// --- folds ---------------------------------------------------------------------

/// k folds over unique ids; every id is tested exactly once and fold sizes
/// differ by at most one. Throws BadCount for duplicates or fewer than k ids.
std::vector<data::DatasetSplit> make_folds(const std::vector<std::string>& ids, int k,
                                           std::uint64_t seed);

// --- volumes and classification ----------------------------------------------

using Features = std::array<double, data::kNumStructures>;

/// Voxel count per structure times the voxel volume.
Features volumes_from_seg(const MaskVolume& label_map, std::array<double, 3> spacing_mm);

struct ClassifierConfig {
  int repeats = 100;
  int folds = 5;
  /// L2 penalty weight on the coefficients (intercept unpenalized).
  double l2 = 1.0;
  std::uint64_t seed = 0;
};

struct ClassifierResult {
  /// Percent, mean and sample std over repeats.
  double accuracy = 0.0;
  double accuracy_sd = 0.0;
  double auc = 0.0;
  double auc_sd = 0.0;
  std::vector<double> repeat_accuracy;
  std::vector<double> repeat_auc;

  nlohmann::json to_json() const;
};

/// Per repeat: stratified k-fold CV of L2 logistic regression on features
/// standardized with training-fold statistics. Accuracy and AUC are computed
/// on the pooled out-of-fold predictions. Throws DegenerateClass when a class
/// has fewer members than folds or n < 10.
ClassifierResult classify_cdr(const std::vector<Features>& x, const std::vector<int>& y,
                              const ClassifierConfig& cfg = {});

/// Mann-Whitney AUC with ties counted as one half.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Positive class for the CDR task: CDR 1 or 2 (vs CDR 0.5).
int cdr_positive(data::Cdr cdr);

// --- statistics ----------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  double mean_diff = 0.0;
  bool significant = false;
};

/// Two-tailed paired t-test at 5%. All-zero differences give p = 1; zero
/// variance with a nonzero mean difference throws DegenerateVariance.
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
  /// Grid points more than three bandwidths from every sample.
  std::vector<bool> far_from_data;
};

/// Nadaraya-Watson estimate with a Gaussian kernel on a uniform grid.
Curve kernel_regression(const std::vector<double>& x, const std::vector<double>& y,
                        double bandwidth, double lo, double hi, int n_grid = 101);
/// 10% of the covariate range (1 when the range is zero).
double default_bandwidth(const std::vector<double>& x);

// --- tables and plots ------------------------------------------------------------

/// Header "label,Total,Ac.,...,Th.,Avg".
std::string dsc_table_header();
/// One row with values scaled to percent, two decimals.
std::string dsc_table_row(const std::string& label, const std::vector<DscReport>& reports);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

void write_line_plot_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series);
void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& y_label, const std::vector<std::string>& labels,
                         const std::vector<double>& values);

}  // namespace gansfer::eval
