#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points from threshold +inf down to -inf: (0,0), one point per distinct
// score, ending at (1,1). Both coordinates are non-decreasing.
struct RocCurve {
  std::vector<RocPoint> points;
};

// Rejects single-class label vectors ("ROC undefined without both classes").
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// Trapezoidal area; with tie-grouped points this equals the Mann-Whitney
// statistic with ties counted 1/2.
double auc(const RocCurve& curve);

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct LabelMetrics {
  std::string label;
  std::optional<double> auc;  // absent when the label has a single class
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  // Zero-denominator convention: the rate is reported as 0 and flagged.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct MetricsReport {
  std::vector<LabelMetrics> per_label;
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
  std::optional<double> mean_auc;          // over labels with a defined ROC
  std::vector<std::string> auc_excluded;   // labels skipped for mean_auc
  double threshold = 0.5;
};

// Thresholded multi-label report: per-label precision/recall/F1/AUC plus
// element-wise accuracy, macro and micro aggregates.
MetricsReport classification_report(const Tensor& probs, const Tensor& labels, double threshold,
                                    const std::vector<std::string>& label_names);

std::string report_text(const MetricsReport& report);
std::string report_csv(const MetricsReport& report);

std::string roc_csv(const RocCurve& curve);
std::string roc_svg(const RocCurve& curve, const std::string& title);

}  // namespace cxr
