#include "sofuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sofuse/errors.hpp"

namespace sofuse {

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j{{"mse", mse}, {"mae", mae},       {"mar", mar}, {"mar_percent", format_percent(mar)},
                   {"mean_ground_truth", mean_ground_truth}, {"n_samples", n_samples}};
  if (accuracy) j["accuracy"] = *accuracy;
  return j;
}

MetricsReport regression_metrics(std::span<const double> preds, std::span<const double> gts) {
  if (preds.size() != gts.size() || preds.empty()) {
    throw DimensionError("regression_metrics needs equal non-empty inputs, got " + std::to_string(preds.size()) +
                         " predictions and " + std::to_string(gts.size()) + " labels");
  }
  MetricsReport r;
  r.n_samples = preds.size();
  double se = 0.0, ae = 0.0, gt = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - gts[i];
    se += d * d;
    ae += std::abs(d);
    gt += gts[i];
  }
  const double n = static_cast<double>(preds.size());
  r.mse = se / n;
  r.mae = ae / n;
  r.mean_ground_truth = gt / n;
  if (r.mean_ground_truth <= 0.0) throw DataError("MAR undefined: mean ground truth is not positive");
  r.mar = r.mae / r.mean_ground_truth;
  return r;
}

double classification_accuracy(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw DimensionError("classification_accuracy needs equal non-empty inputs");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int c : {pred[i], gt[i]}) {
      if (c < 0 || c >= 5) throw LabelError("class " + std::to_string(c) + " outside [0,5)");
    }
    correct += pred[i] == gt[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

bool consistency_check(std::span<const ReportRow> rows, double tolerance) {
  if (rows.size() < 2) return true;
  double lo = implied_mean_ground_truth(rows[0].mae, rows[0].mar);
  double hi = lo;
  for (const ReportRow& r : rows) {
    const double m = implied_mean_ground_truth(r.mae, r.mar);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  return (hi - lo) / lo <= tolerance;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

std::string metrics_table(std::span<const TableRow> rows, bool classification) {
  std::ostringstream out;
  char line[128];
  if (classification) {
    std::snprintf(line, sizeof line, "%-24s| %-8s\n", "Model", "Acc");
    out << line << std::string(34, '-') << '\n';
    for (const TableRow& r : rows) {
      std::snprintf(line, sizeof line, "%-24s| %-8s\n", r.model.c_str(),
                    r.report.accuracy ? format_percent(*r.report.accuracy).c_str() : "n/a");
      out << line;
    }
    return out.str();
  }
  std::snprintf(line, sizeof line, "%-24s| %-10s| %-10s| %-7s\n", "Model", "MSE", "MAE", "MAR");
  out << line << std::string(56, '-') << '\n';
  for (const TableRow& r : rows) {
    std::snprintf(line, sizeof line, "%-24s| %-10.3g| %-10.3g| %-7s\n", r.model.c_str(), r.report.mse,
                  r.report.mae, format_percent(r.report.mar).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace sofuse
