#include "cxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cxr/error.hpp"
#include "cxr/svg.hpp"

namespace cxr {

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("roc_curve: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t pos = 0, neg = 0;
  for (int l : labels) (l != 0 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw ValueError("ROC undefined without both classes");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    // Tie group: one point per distinct score.
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    const RocPoint p{static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos)};
    const RocPoint& last = curve.points.back();
    if (p.fpr != last.fpr || p.tpr != last.tpr) curve.points.push_back(p);
  }
  if (curve.points.back().fpr != 1.0 || curve.points.back().tpr != 1.0) {
    curve.points.push_back({1.0, 1.0});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

MetricsReport classification_report(const Tensor& probs, const Tensor& labels, double threshold,
                                    const std::vector<std::string>& label_names) {
  if (probs.rank() != 2) {
    throw ShapeError("classification_report expects (B, C) probabilities, got " +
                     probs.shape_string());
  }
  check_same_shape(probs, labels, "classification_report");
  if (!(threshold > 0.0) || !(threshold < 1.0)) {
    throw ValueError("classification_report: threshold must lie in (0, 1)");
  }
  const std::size_t B = probs.extent(0), C = probs.extent(1);

  MetricsReport report;
  report.threshold = threshold;
  std::size_t correct = 0;
  std::size_t micro_tp = 0, micro_fp = 0, micro_fn = 0;
  double auc_sum = 0.0;
  std::size_t auc_n = 0;

  for (std::size_t c = 0; c < C; ++c) {
    LabelMetrics lm;
    lm.label = c < label_names.size() ? label_names[c] : "class_" + std::to_string(c);

    std::vector<double> scores(B);
    std::vector<int> truth(B);
    for (std::size_t b = 0; b < B; ++b) {
      scores[b] = probs.at2(b, c);
      truth[b] = labels.at2(b, c) != 0.0 ? 1 : 0;
      const bool pred = probs.at2(b, c) >= threshold;
      const bool is_pos = truth[b] != 0;
      if (pred && is_pos) ++lm.counts.tp;
      else if (pred && !is_pos) ++lm.counts.fp;
      else if (!pred && is_pos) ++lm.counts.fn;
      else ++lm.counts.tn;
    }
    correct += lm.counts.tp + lm.counts.tn;
    micro_tp += lm.counts.tp;
    micro_fp += lm.counts.fp;
    micro_fn += lm.counts.fn;

    const std::size_t pdenom = lm.counts.tp + lm.counts.fp;
    const std::size_t rdenom = lm.counts.tp + lm.counts.fn;
    lm.precision_undefined = pdenom == 0;
    lm.recall_undefined = rdenom == 0;
    lm.precision = pdenom ? static_cast<double>(lm.counts.tp) / pdenom : 0.0;
    lm.recall = rdenom ? static_cast<double>(lm.counts.tp) / rdenom : 0.0;
    const double pr = lm.precision + lm.recall;
    lm.f1_undefined = pr == 0.0;
    lm.f1 = pr > 0.0 ? 2.0 * lm.precision * lm.recall / pr : 0.0;

    bool has_pos = false, has_neg = false;
    for (int t : truth) (t ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      lm.auc = auc(roc_curve(scores, truth));
      auc_sum += *lm.auc;
      ++auc_n;
    } else {
      report.auc_excluded.push_back(lm.label);
    }
    report.per_label.push_back(std::move(lm));
  }

  report.accuracy = static_cast<double>(correct) / static_cast<double>(B * C);
  for (const LabelMetrics& lm : report.per_label) {
    report.macro_precision += lm.precision;
    report.macro_recall += lm.recall;
    report.macro_f1 += lm.f1;
  }
  report.macro_precision /= static_cast<double>(C);
  report.macro_recall /= static_cast<double>(C);
  report.macro_f1 /= static_cast<double>(C);

  report.micro_precision = micro_tp + micro_fp ? static_cast<double>(micro_tp) / (micro_tp + micro_fp) : 0.0;
  report.micro_recall = micro_tp + micro_fn ? static_cast<double>(micro_tp) / (micro_tp + micro_fn) : 0.0;
  const double mpr = report.micro_precision + report.micro_recall;
  report.micro_f1 = mpr > 0.0 ? 2.0 * report.micro_precision * report.micro_recall / mpr : 0.0;

  if (auc_n > 0) report.mean_auc = auc_sum / static_cast<double>(auc_n);
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string report_text(const MetricsReport& report) {
  std::ostringstream os;
  os << "threshold: " << fmt(report.threshold) << "\n";
  os << "accuracy:  " << fmt(report.accuracy) << "\n\n";
  os << "label                 auc      precision  recall   f1       tp    fp    tn    fn\n";
  for (const LabelMetrics& lm : report.per_label) {
    os << lm.label;
    for (std::size_t i = lm.label.size(); i < 22; ++i) os << ' ';
    os << (lm.auc ? fmt(*lm.auc) : "   --   ") << " " << fmt(lm.precision)
       << (lm.precision_undefined ? "*" : " ") << "  " << fmt(lm.recall)
       << (lm.recall_undefined ? "*" : " ") << " " << fmt(lm.f1) << (lm.f1_undefined ? "*" : " ")
       << " " << lm.counts.tp << "  " << lm.counts.fp << "  " << lm.counts.tn << "  "
       << lm.counts.fn << "\n";
  }
  os << "\nmacro precision/recall/f1: " << fmt(report.macro_precision) << " / "
     << fmt(report.macro_recall) << " / " << fmt(report.macro_f1) << "\n";
  os << "micro precision/recall/f1: " << fmt(report.micro_precision) << " / "
     << fmt(report.micro_recall) << " / " << fmt(report.micro_f1) << "\n";
  if (report.mean_auc) {
    os << "mean auc: " << fmt(*report.mean_auc);
    if (!report.auc_excluded.empty()) {
      os << " (excluded single-class labels:";
      for (const std::string& l : report.auc_excluded) os << " " << l;
      os << ")";
    }
    os << "\n";
  } else {
    os << "mean auc: undefined (no label has both classes)\n";
  }
  if (std::any_of(report.per_label.begin(), report.per_label.end(), [](const LabelMetrics& lm) {
        return lm.precision_undefined || lm.recall_undefined || lm.f1_undefined;
      })) {
    os << "* zero-denominator rate, reported as 0\n";
  }
  return os.str();
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "label,auc,precision,recall,f1,tp,fp,tn,fn,zero_denominator\n";
  for (const LabelMetrics& lm : report.per_label) {
    os << lm.label << ",";
    if (lm.auc) os << *lm.auc;
    os << "," << lm.precision << "," << lm.recall << "," << lm.f1 << "," << lm.counts.tp << ","
       << lm.counts.fp << "," << lm.counts.tn << "," << lm.counts.fn << ",";
    std::string flags;
    if (lm.precision_undefined) flags += "P";
    if (lm.recall_undefined) flags += "R";
    if (lm.f1_undefined) flags += "F";
    os << flags << "\n";
  }
  os << "__accuracy__,," << report.accuracy << ",,,,,,,\n";
  os << "__macro__,," << report.macro_precision << "," << report.macro_recall << ","
     << report.macro_f1 << ",,,,,\n";
  os << "__micro__,," << report.micro_precision << "," << report.micro_recall << ","
     << report.micro_f1 << ",,,,,\n";
  os << "__mean_auc__,";
  if (report.mean_auc) os << *report.mean_auc;
  os << ",,,,,,,,\n";
  os << "__threshold__,," << report.threshold << ",,,,,,,\n";
  return os.str();
}

std::string roc_csv(const RocCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "fpr,tpr\n";
  for (const RocPoint& p : curve.points) os << p.fpr << "," << p.tpr << "\n";
  return os.str();
}

std::string roc_svg(const RocCurve& curve, const std::string& title) {
  SvgSeries series;
  series.name = title;
  for (const RocPoint& p : curve.points) series.points.emplace_back(p.fpr, p.tpr);
  SvgSeries diagonal;
  diagonal.name = "chance";
  diagonal.dashed = true;
  diagonal.points = {{0.0, 0.0}, {1.0, 1.0}};
  return line_plot_svg({series, diagonal}, title, "false positive rate", "true positive rate",
                       {0.0, 1.0}, {0.0, 1.0});
}

}  // namespace cxr
