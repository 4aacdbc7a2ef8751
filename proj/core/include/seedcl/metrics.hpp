#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "seedcl/image.hpp"

namespace seedcl {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  /// Throws UnknownLabel for a name outside class_names and ShapeMismatch on
  /// unequal lengths.
  static ConfusionMatrix from_labels(std::span<const std::string> truth, std::span<const std::string> predicted,
                                     std::vector<std::string> class_names);
  static ConfusionMatrix from_indices(std::span<const int> truth, std::span<const int> predicted,
                                      std::vector<std::string> class_names);

  void add(int truth, int predicted, std::uint64_t count = 1);

  std::size_t class_count() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * names_.size() + predicted]; }
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t column_sum(std::size_t c) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Scores from raw counts; a zero denominator gives 0.
ClassScores scores_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);
/// F1 as the harmonic mean; 0 when p + r = 0.
double f1_score(double precision, double recall);
ClassScores precision_recall_f1(const ConfusionMatrix& cm, std::size_t class_index);

struct ClassificationReport {
  std::vector<std::string> class_names;
  std::vector<ClassScores> per_class;
  std::vector<std::uint64_t> support;
  double accuracy = 0.0;
  ClassScores macro;
  std::uint64_t total = 0;
};

/// Throws EmptyMatrix when the matrix holds no samples.
ClassificationReport classification_report(const ConfusionMatrix& cm);

/// Unweighted means of per-class scores.
ClassScores macro_average(std::span<const ClassScores> per_class);

/// Half-up rounding to two decimals, e.g. 0.705 -> "0.71".
std::string format_2dp(double v);

/// Fixed-width text table: per-class precision, recall, f1-score, support,
/// then accuracy and macro avg rows.
std::string render_report(const ClassificationReport& report);
nlohmann::ordered_json report_to_json(const ClassificationReport& report);

/// Per-channel 256-bin frequencies, each channel summing to 1.
struct ColorHistogram {
  std::array<std::array<double, 256>, 3> bins{};
};

ColorHistogram color_histogram(const Image& img);
/// Root mean square difference over all 768 bins.
double histogram_rms_difference(const ColorHistogram& a, const ColorHistogram& b);
/// Flat variant; throws ShapeMismatch unless both have the same length.
double histogram_rms_difference(std::span<const double> a, std::span<const double> b);

}  // namespace seedcl
