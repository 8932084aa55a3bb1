#include "mcar/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mcar {

double average_precision(const std::vector<float>& scores,
                         const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("average_precision: scores/labels length mismatch");
  }
  const int positives = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) {
    throw std::invalid_argument("average_precision: class has no positive labels");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  double sum = 0.0;
  int hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / positives;
}

MapResult mean_average_precision(const std::vector<std::vector<float>>& scores,
                                 const std::vector<LabelVector>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("mean_average_precision: empty or mismatched inputs");
  }
  const std::size_t num_classes = labels[0].size();
  MapResult r;
  r.ap.assign(num_classes, -1.0);

  std::vector<float> class_scores(scores.size());
  std::vector<std::uint8_t> class_labels(scores.size());
  double sum = 0.0;
  int counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    bool any_pos = false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      class_scores[i] = scores[i][c];
      class_labels[i] = labels[i][c];
      any_pos = any_pos || labels[i][c];
    }
    if (!any_pos) {
      r.skipped_classes.push_back(static_cast<int>(c));
      continue;
    }
    r.ap[c] = average_precision(class_scores, class_labels);
    sum += r.ap[c];
    ++counted;
  }
  r.map = counted > 0 ? sum / counted : 0.0;
  return r;
}

MapResult mean_average_precision(const std::vector<std::vector<float>>& scores,
                                 const std::vector<Sample>& samples) {
  std::vector<LabelVector> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.labels);
  return mean_average_precision(scores, labels);
}

ConfusionCounts count_assignments(const std::vector<std::vector<float>>& scores,
                                  const std::vector<LabelVector>& labels, double threshold,
                                  AssignMode mode) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("count_assignments: empty or mismatched inputs");
  }
  const int num_classes = static_cast<int>(labels[0].size());
  ConfusionCounts counts;
  counts.correct.assign(num_classes, 0);
  counts.predicted.assign(num_classes, 0);
  counts.truth.assign(num_classes, 0);

  std::vector<int> order(num_classes);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(scores[i].size()) != num_classes ||
        static_cast<int>(labels[i].size()) != num_classes) {
      throw std::invalid_argument("count_assignments: inconsistent class count");
    }
    std::vector<std::uint8_t> assigned(num_classes, 0);
    if (mode == AssignMode::Threshold) {
      for (int c = 0; c < num_classes; ++c) assigned[c] = scores[i][c] > threshold;
    } else {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return scores[i][a] > scores[i][b]; });
      for (int k = 0; k < std::min(3, num_classes); ++k) assigned[order[k]] = 1;
    }
    for (int c = 0; c < num_classes; ++c) {
      counts.predicted[c] += assigned[c];
      counts.truth[c] += labels[i][c] ? 1 : 0;
      counts.correct[c] += (assigned[c] && labels[i][c]) ? 1 : 0;
    }
  }
  return counts;
}

PrfSet prf_from_counts(const ConfusionCounts& counts) {
  const int num_classes = counts.num_classes();
  long long sum_c = 0, sum_p = 0, sum_g = 0;
  double cp = 0.0, cr = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    sum_c += counts.correct[c];
    sum_p += counts.predicted[c];
    sum_g += counts.truth[c];
    if (counts.predicted[c] > 0)
      cp += static_cast<double>(counts.correct[c]) / counts.predicted[c];
    if (counts.truth[c] > 0) cr += static_cast<double>(counts.correct[c]) / counts.truth[c];
  }
  PrfSet p;
  p.op = sum_p > 0 ? static_cast<double>(sum_c) / sum_p : 0.0;
  p.or_ = sum_g > 0 ? static_cast<double>(sum_c) / sum_g : 0.0;
  p.of1 = (p.op + p.or_) > 0.0 ? 2.0 * p.op * p.or_ / (p.op + p.or_) : 0.0;
  p.cp = cp / num_classes;
  p.cr_ = cr / num_classes;
  p.cf1 = (p.cp + p.cr_) > 0.0 ? 2.0 * p.cp * p.cr_ / (p.cp + p.cr_) : 0.0;
  return p;
}

PrfSet prf_report(const std::vector<std::vector<float>>& scores,
                  const std::vector<LabelVector>& labels, double threshold, AssignMode mode) {
  return prf_from_counts(count_assignments(scores, labels, threshold, mode));
}

MetricReport evaluate_scores(const std::vector<std::vector<float>>& scores,
                             const std::vector<LabelVector>& labels, double threshold) {
  MetricReport r;
  r.threshold = threshold;
  const MapResult m = mean_average_precision(scores, labels);
  r.ap = m.ap;
  r.map = m.map;
  r.skipped_classes = m.skipped_classes;
  r.all = prf_report(scores, labels, threshold, AssignMode::Threshold);
  r.top3 = prf_report(scores, labels, threshold, AssignMode::Top3);
  return r;
}

namespace {

void put(std::ostringstream& os, const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  os << key << " " << buf << "\n";
}

}  // namespace

std::string format_report(const MetricReport& report,
                          const std::vector<std::string>& class_names) {
  std::ostringstream os;
  put(os, "threshold", report.threshold);
  put(os, "map", report.map);
  for (std::size_t c = 0; c < report.ap.size(); ++c) {
    os << "ap." << c << " ";
    if (report.ap[c] < 0.0) {
      os << "skipped";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", report.ap[c]);
      os << buf;
    }
    if (c < class_names.size()) os << " " << class_names[c];
    os << "\n";
  }
  put(os, "op", report.all.op);
  put(os, "or", report.all.or_);
  put(os, "of1", report.all.of1);
  put(os, "cp", report.all.cp);
  put(os, "cr", report.all.cr_);
  put(os, "cf1", report.all.cf1);
  put(os, "top3.op", report.top3.op);
  put(os, "top3.or", report.top3.or_);
  put(os, "top3.of1", report.top3.of1);
  put(os, "top3.cp", report.top3.cp);
  put(os, "top3.cr", report.top3.cr_);
  put(os, "top3.cf1", report.top3.cf1);
  return os.str();
}

}  // namespace mcar
