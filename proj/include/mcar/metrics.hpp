#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcar/dataset.hpp"

namespace mcar {

/// Per-class assignment counts: M_c (correct positives), M_p (predicted
/// positives), M_g (ground-truth positives).
struct ConfusionCounts {
  std::vector<int> correct;
  std::vector<int> predicted;
  std::vector<int> truth;

  int num_classes() const { return static_cast<int>(correct.size()); }
};

enum class AssignMode { Threshold, Top3 };

struct PrfSet {
  double op = 0.0, or_ = 0.0, of1 = 0.0;
  double cp = 0.0, cr_ = 0.0, cf1 = 0.0;
};

struct MetricReport {
  std::vector<double> ap;  // -1 marks a class skipped for lack of positives
  std::vector<int> skipped_classes;
  double map = 0.0;
  double threshold = 0.6;
  PrfSet all;   // threshold assignment
  PrfSet top3;  // top-3 assignment
};

/// Non-interpolated AP of one class over a ranked image list. Ties keep the
/// original image order. Throws if there is no positive label.
double average_precision(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels);

struct MapResult {
  double map = 0.0;
  std::vector<double> ap;
  std::vector<int> skipped_classes;
};

/// mAP over classes that have at least one positive; the rest are reported
/// as skipped. scores[i][c] pairs with labels[i][c].
MapResult mean_average_precision(const std::vector<std::vector<float>>& scores,
                                 const std::vector<LabelVector>& labels);
MapResult mean_average_precision(const std::vector<std::vector<float>>& scores,
                                 const std::vector<Sample>& samples);

/// Label assignment: Threshold predicts class c iff score > threshold; Top3
/// predicts the three highest-scored classes (ties toward the lower index).
ConfusionCounts count_assignments(const std::vector<std::vector<float>>& scores,
                                  const std::vector<LabelVector>& labels, double threshold,
                                  AssignMode mode);

/// OP/OR/OF1 from pooled counts, CP/CR/CF1 from per-class means; classes
/// with a zero denominator contribute 0 to the per-class means.
PrfSet prf_from_counts(const ConfusionCounts& counts);

PrfSet prf_report(const std::vector<std::vector<float>>& scores,
                  const std::vector<LabelVector>& labels, double threshold, AssignMode mode);

/// AP/mAP plus both assignment variants in one report.
MetricReport evaluate_scores(const std::vector<std::vector<float>>& scores,
                             const std::vector<LabelVector>& labels, double threshold);

/// Key/value text document with a stable key order; bit-stable for fixed
/// inputs. Class names, when provided, annotate the per-class AP lines.
std::string format_report(const MetricReport& report,
                          const std::vector<std::string>& class_names = {});

}  // namespace mcar
