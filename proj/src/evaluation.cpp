#include "gansfer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "gansfer/dataset_io.hpp"
#include "gansfer/rng.hpp"

namespace gansfer::eval {

namespace {

template <typename G>
double dsc_impl(const G& a, const G& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("dsc inputs differ in shape");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

template <typename G>
DscReport report_impl(const G& pred, const G& ref) {
  if (!pred.same_shape(ref)) throw ShapeMismatch("label maps differ in shape");
  DscReport r;
  G p = pred, q = ref;
  for (int s = 0; s < data::kNumStructures; ++s) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      p[i] = pred[i] == s + 1;
      q[i] = ref[i] == s + 1;
    }
    r.per_structure[s] = dsc_impl(p, q);
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p[i] = pred[i] != 0;
    q[i] = ref[i] != 0;
  }
  r.overall = dsc_impl(p, q);
  r.mean = std::accumulate(r.per_structure.begin(), r.per_structure.end(), 0.0) /
           data::kNumStructures;
  return r;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// L2 logistic regression by Newton's method. Column 0 of X is the intercept.
Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double l2) {
  const auto d = X.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d, l2);
  penalty(0) = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd p = (1.0 + (-(X * w).array()).exp()).inverse().matrix();
    const Eigen::VectorXd grad = X.transpose() * (p - y) + penalty.cwiseProduct(w);
    const Eigen::VectorXd s = (p.array() * (1.0 - p.array())).matrix();
    Eigen::MatrixXd H = X.transpose() * s.asDiagonal() * X;
    H.diagonal() += penalty;
    H.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    w -= step;
    if (step.norm() < 1e-10) break;
  }
  return w;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

double dsc(const Mask& a, const Mask& b) { return dsc_impl(a, b); }
double dsc(const MaskVolume& a, const MaskVolume& b) { return dsc_impl(a, b); }

nlohmann::json DscReport::to_json() const {
  nlohmann::json j;
  j["subject_id"] = subject_id;
  j["age"] = age;
  j["cdr"] = data::cdr_value(cdr);
  j["overall"] = overall;
  j["mean"] = mean;
  for (int s = 0; s < data::kNumStructures; ++s)
    j["structures"][std::string(data::kStructureNames[s])] = per_structure[s];
  return j;
}

DscReport dsc_report(const Mask& pred, const Mask& ref) { return report_impl(pred, ref); }

DscReport dsc_report(const MaskVolume& pred, const MaskVolume& ref, const std::string& subject_id,
                     double age, data::Cdr cdr) {
  auto r = report_impl(pred, ref);
  r.subject_id = subject_id;
  r.age = age;
  r.cdr = cdr;
  return r;
}

std::vector<data::DatasetSplit> make_folds(const std::vector<std::string>& ids, int k,
                                           std::uint64_t seed) {
  if (k < 2) throw BadCount("need at least two folds");
  if (static_cast<int>(ids.size()) < k) throw BadCount("fewer ids than folds");
  auto sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw BadCount("subject ids are not unique");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<data::DatasetSplit> folds(k);
  for (int f = 0; f < k; ++f) folds[f].fold_id = f;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int f = static_cast<int>(i % k);
    for (int g = 0; g < k; ++g)
      (g == f ? folds[g].test_ids : folds[g].train_ids).push_back(ids[order[i]]);
  }
  return folds;
}

Features volumes_from_seg(const MaskVolume& label_map, std::array<double, 3> spacing_mm) {
  Features v{};
  const double voxel = spacing_mm[0] * spacing_mm[1] * spacing_mm[2];
  for (auto l : label_map.values())
    if (l >= 1 && l <= data::kNumStructures) v[l - 1] += voxel;
  return v;
}

int cdr_positive(data::Cdr cdr) { return cdr == data::Cdr::k1 || cdr == data::Cdr::k2; }

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeMismatch("scores and labels differ in length");
  double pairs = 0.0, wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0.0) throw DegenerateClass("AUC needs both classes");
  return wins / pairs;
}

ClassifierResult classify_cdr(const std::vector<Features>& x, const std::vector<int>& y,
                              const ClassifierConfig& cfg) {
  if (x.size() != y.size()) throw ShapeMismatch("features and labels differ in length");
  const int n = static_cast<int>(x.size());
  if (n < 10) throw DegenerateClass("need at least 10 subjects");
  std::vector<std::size_t> cls[2];
  for (int i = 0; i < n; ++i) cls[y[i] ? 1 : 0].push_back(i);
  if (static_cast<int>(cls[0].size()) < cfg.folds || static_cast<int>(cls[1].size()) < cfg.folds)
    throw DegenerateClass("each class needs at least one member per fold");
  constexpr int d = data::kNumStructures;

  ClassifierResult res;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
    std::vector<int> fold_of(n);
    for (auto& c : cls) {
      auto order = c;
      shuffle(order, rng);
      for (std::size_t i = 0; i < order.size(); ++i)
        fold_of[order[i]] = static_cast<int>(i % cfg.folds);
    }
    std::vector<double> score(n, 0.0);
    for (int f = 0; f < cfg.folds; ++f) {
      std::vector<int> tr, te;
      for (int i = 0; i < n; ++i) (fold_of[i] == f ? te : tr).push_back(i);
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d), sd = Eigen::VectorXd::Zero(d);
      for (int i : tr)
        for (int k = 0; k < d; ++k) mu(k) += x[i][k];
      mu /= static_cast<double>(tr.size());
      for (int i : tr)
        for (int k = 0; k < d; ++k) sd(k) += (x[i][k] - mu(k)) * (x[i][k] - mu(k));
      for (int k = 0; k < d; ++k) {
        sd(k) = std::sqrt(sd(k) / static_cast<double>(tr.size()));
        if (!(sd(k) > 0.0)) sd(k) = 1.0;
      }
      Eigen::MatrixXd X(tr.size(), d + 1);
      Eigen::VectorXd t(tr.size());
      for (std::size_t r = 0; r < tr.size(); ++r) {
        X(r, 0) = 1.0;
        for (int k = 0; k < d; ++k) X(r, k + 1) = (x[tr[r]][k] - mu(k)) / sd(k);
        t(r) = y[tr[r]] ? 1.0 : 0.0;
      }
      const auto w = fit_logistic(X, t, cfg.l2);
      for (int i : te) {
        double z = w(0);
        for (int k = 0; k < d; ++k) z += w(k + 1) * (x[i][k] - mu(k)) / sd(k);
        score[i] = z;
      }
    }
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += (score[i] > 0.0) == (y[i] != 0);
    res.repeat_accuracy.push_back(100.0 * correct / n);
    res.repeat_auc.push_back(roc_auc(score, y));
  }
  res.accuracy = mean_of(res.repeat_accuracy);
  res.accuracy_sd = sd_of(res.repeat_accuracy);
  res.auc = mean_of(res.repeat_auc);
  res.auc_sd = sd_of(res.repeat_auc);
  return res;
}

nlohmann::json ClassifierResult::to_json() const {
  return {{"accuracy", accuracy},         {"accuracy_sd", accuracy_sd},
          {"auc", auc},                   {"auc_sd", auc_sd},
          {"repeat_accuracy", repeat_accuracy}, {"repeat_auc", repeat_auc}};
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeMismatch("paired samples differ in length");
  if (a.size() < 2) throw BadCount("paired t-test needs at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  TTestResult r;
  r.df = static_cast<int>(a.size()) - 1;
  r.mean_diff = mean_of(diff);
  const double sd = sd_of(diff);
  if (!(sd > 0.0)) {
    if (r.mean_diff == 0.0) return r;
    throw DegenerateVariance("paired differences have zero variance");
  }
  r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(a.size())));
  const boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(dist, -std::abs(r.t));
  r.significant = r.p < 0.05;
  return r;
}

double default_bandwidth(const std::vector<double>& x) {
  if (x.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  return range > 0.0 ? 0.1 * range : 1.0;
}

Curve kernel_regression(const std::vector<double>& x, const std::vector<double>& y,
                        double bandwidth, double lo, double hi, int n_grid) {
  if (x.empty() || x.size() != y.size()) throw BadCount("kernel regression needs paired points");
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
  if (n_grid < 1) throw BadCount("grid needs at least one point");
  Curve c;
  for (int g = 0; g < n_grid; ++g) {
    const double q = n_grid == 1 ? lo : lo + (hi - lo) * g / (n_grid - 1);
    // Log-weights relative to the nearest point avoid underflow far from data.
    double dmin = INFINITY;
    for (double xi : x) dmin = std::min(dmin, std::abs(q - xi));
    double ws = 0.0, wy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = (q - x[i]) / bandwidth, u0 = dmin / bandwidth;
      const double w = std::exp(-0.5 * (u * u - u0 * u0));
      ws += w;
      wy += w * y[i];
    }
    c.x.push_back(q);
    c.y.push_back(wy / ws);
    c.far_from_data.push_back(dmin > 3.0 * bandwidth);
  }
  return c;
}

std::string dsc_table_header() {
  std::string h = "label,Total";
  for (auto a : data::kStructureAbbrev) h += "," + std::string(a);
  return h + ",Avg";
}

std::string dsc_table_row(const std::string& label, const std::vector<DscReport>& reports) {
  if (reports.empty()) throw MissingResults("no DSC reports for " + label);
  std::array<double, data::kNumStructures> s{};
  double overall = 0.0, mean = 0.0;
  for (const auto& r : reports) {
    overall += r.overall;
    mean += r.mean;
    for (int k = 0; k < data::kNumStructures; ++k) s[k] += r.per_structure[k];
  }
  const double n = static_cast<double>(reports.size());
  std::string row = label + "," + fmt(100.0 * overall / n);
  for (double v : s) row += "," + fmt(100.0 * v / n);
  return row + "," + fmt(100.0 * mean / n);
}

void write_line_plot_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << xml_escape(title) << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" "
      << "font-size=\"11\">" << fmt(xv) << "</text>\n"
      << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" "
      << "font-size=\"11\">" << fmt(yv) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(x_label) << "</text>\n"
    << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 18 " << (T + H - B) / 2 << ")\">" << xml_escape(y_label)
    << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % 8];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << "," << py(s.y[i]) << " ";
    o << "\"/>\n"
      << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 18 * (si + 1) << "\" fill=\"" << color
      << "\" font-size=\"12\">" << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  io::write_text(path, o.str());
}

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::string& y_label, const std::vector<std::string>& labels,
                         const std::vector<double>& values) {
  if (labels.size() != values.size()) throw ShapeMismatch("bar labels and values differ");
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  double y0 = 0.0, y1 = 1e-12;
  for (double v : values) {
    y0 = std::min(y0, v);
    y1 = std::max(y1, v);
  }
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  const double slot = (W - L - R) / std::max<std::size_t>(1, values.size());
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << xml_escape(title) << "</text>\n"
    << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 18 " << (T + H - B) / 2 << ")\">" << xml_escape(y_label)
    << "</text>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = L + slot * i + slot * 0.15;
    const double top = py(std::max(values[i], 0.0)), bottom = py(std::min(values[i], 0.0));
    o << "<rect x=\"" << x << "\" y=\"" << top << "\" width=\"" << slot * 0.7 << "\" height=\""
      << bottom - top << "\" fill=\"" << kPalette[i % 8] << "\"/>\n"
      << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << H - B + 18
      << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(labels[i]) << "</text>\n"
      << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << top - 4
      << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(values[i]) << "</text>\n";
  }
  o << "</svg>\n";
  io::write_text(path, o.str());
}

}  // namespace gansfer::eval
