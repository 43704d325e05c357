#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace sofuse {

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  double mar = 0.0;  // mae / mean_ground_truth, a fraction
  double mean_ground_truth = 0.0;
  std::optional<double> accuracy;
  std::size_t n_samples = 0;

  nlohmann::json to_json() const;
};

MetricsReport regression_metrics(std::span<const double> preds, std::span<const double> gts);
double classification_accuracy(std::span<const int> pred_classes, std::span<const int> gt_classes);

// Mean ground truth implied by a reported (MAE, MAR) pair.
inline double implied_mean_ground_truth(double mae, double mar) { return mae / mar; }

struct ReportRow {
  std::string model;
  double mae = 0.0;
  double mar = 0.0;
};

// Rows evaluated on one test set share a mean ground truth, so mae/mar must
// agree across rows within `tolerance` (relative spread).
bool consistency_check(std::span<const ReportRow> rows, double tolerance = 0.01);

// "34.6%" style, one decimal.
std::string format_percent(double fraction);

struct TableRow {
  std::string model;
  MetricsReport report;
};

// Fixed-width table: Model | MSE | MAE | MAR (regression) or Model | Acc.
std::string metrics_table(std::span<const TableRow> rows, bool classification);

}  // namespace sofuse
