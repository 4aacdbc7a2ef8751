#include "seedcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "seedcl/error.hpp"

namespace seedcl {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {}

ConfusionMatrix ConfusionMatrix::from_labels(std::span<const std::string> truth, std::span<const std::string> predicted,
                                             std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) throw ShapeMismatch("truth and prediction lists differ in length");
  ConfusionMatrix cm(std::move(class_names));
  auto index = [&](const std::string& label) {
    const auto it = std::find(cm.names_.begin(), cm.names_.end(), label);
    if (it == cm.names_.end()) throw UnknownLabel("label '" + label + "' is not a known class");
    return static_cast<int>(it - cm.names_.begin());
  };
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(index(truth[i]), index(predicted[i]));
  return cm;
}

ConfusionMatrix ConfusionMatrix::from_indices(std::span<const int> truth, std::span<const int> predicted,
                                              std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) throw ShapeMismatch("truth and prediction lists differ in length");
  ConfusionMatrix cm(std::move(class_names));
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t count) {
  const int n = static_cast<int>(names_.size());
  if (truth < 0 || truth >= n) throw UnknownLabel("true class index " + std::to_string(truth) + " out of range");
  if (predicted < 0 || predicted >= n)
    throw UnknownLabel("predicted class index " + std::to_string(predicted) + " out of range");
  counts_[static_cast<std::size_t>(truth) * names_.size() + static_cast<std::size_t>(predicted)] += count;
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < names_.size(); ++c) t += at(c, c);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < names_.size(); ++j) s += at(c, j);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) s += at(i, c);
  return s;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

ClassScores scores_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassScores s;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

ClassScores precision_recall_f1(const ConfusionMatrix& cm, std::size_t class_index) {
  if (class_index >= cm.class_count()) throw ShapeMismatch("class index out of range");
  const std::uint64_t tp = cm.at(class_index, class_index);
  return scores_from_counts(tp, cm.column_sum(class_index) - tp, cm.row_sum(class_index) - tp);
}

ClassScores macro_average(std::span<const ClassScores> per_class) {
  ClassScores m;
  if (per_class.empty()) return m;
  for (const auto& s : per_class) {
    m.precision += s.precision;
    m.recall += s.recall;
    m.f1 += s.f1;
  }
  const double n = static_cast<double>(per_class.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  ClassificationReport r;
  r.total = cm.total();
  if (r.total == 0) throw EmptyMatrix("classification report of an empty confusion matrix");
  r.class_names = cm.class_names();
  for (std::size_t c = 0; c < cm.class_count(); ++c) {
    r.per_class.push_back(precision_recall_f1(cm, c));
    r.support.push_back(cm.row_sum(c));
  }
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.total);
  r.macro = macro_average(r.per_class);
  return r;
}

std::string format_2dp(double v) {
  // The 1e-9 nudge keeps values such as 0.705 (stored as 0.70499...) rounding up.
  const double hundredths = std::floor(v * 100.0 + 0.5 + 1e-9);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
  return buf;
}

std::string render_report(const ClassificationReport& report) {
  std::size_t name_width = std::string("macro avg").size();
  for (const auto& n : report.class_names) name_width = std::max(name_width, n.size());
  auto row = [&](const std::string& name, const std::string& p, const std::string& r, const std::string& f,
                 const std::string& support) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%*s %9s %9s %9s %9s\n", static_cast<int>(name_width), name.c_str(), p.c_str(),
                  r.c_str(), f.c_str(), support.c_str());
    return std::string(buf);
  };
  std::ostringstream out;
  out << row("", "precision", "recall", "f1-score", "support") << "\n";
  for (std::size_t c = 0; c < report.class_names.size(); ++c) {
    const auto& s = report.per_class[c];
    out << row(report.class_names[c], format_2dp(s.precision), format_2dp(s.recall), format_2dp(s.f1),
               std::to_string(report.support[c]));
  }
  out << "\n";
  out << row("accuracy", "", "", format_2dp(report.accuracy), std::to_string(report.total));
  out << row("macro avg", format_2dp(report.macro.precision), format_2dp(report.macro.recall),
             format_2dp(report.macro.f1), std::to_string(report.total));
  return out.str();
}

nlohmann::ordered_json report_to_json(const ClassificationReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.class_names.size(); ++c) {
    classes.push_back({{"class", report.class_names[c]},
                       {"precision", report.per_class[c].precision},
                       {"recall", report.per_class[c].recall},
                       {"f1", report.per_class[c].f1},
                       {"support", report.support[c]}});
  }
  j["per_class"] = std::move(classes);
  j["accuracy"] = report.accuracy;
  j["macro"] = {{"precision", report.macro.precision}, {"recall", report.macro.recall}, {"f1", report.macro.f1}};
  j["total"] = report.total;
  return j;
}

ColorHistogram color_histogram(const Image& img) {
  ColorHistogram h;
  const std::size_t pixels = static_cast<std::size_t>(img.width()) * static_cast<std::size_t>(img.height());
  if (pixels == 0) throw ShapeMismatch("histogram of an empty image");
  std::array<std::array<std::uint64_t, 256>, 3> counts{};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) ++counts[c][img.at(x, y, c)];
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 256; ++b) h.bins[c][b] = static_cast<double>(counts[c][b]) / static_cast<double>(pixels);
  return h;
}

double histogram_rms_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeMismatch("histograms have different bin layouts");
  if (a.empty()) throw ShapeMismatch("histograms have no bins");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum / static_cast<double>(a.size()));
}

double histogram_rms_difference(const ColorHistogram& a, const ColorHistogram& b) {
  double sum = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 256; ++k) sum += (a.bins[c][k] - b.bins[c][k]) * (a.bins[c][k] - b.bins[c][k]);
  return std::sqrt(sum / 768.0);
}

}  // namespace seedcl
