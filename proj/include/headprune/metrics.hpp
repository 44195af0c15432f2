#pragma once

// Binary confusion counts and the report rows used for original-vs-pruned
// comparison: positive-class precision/recall/F1, accuracy, and macro and
// support-weighted averages of precision and recall over both classes.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "headprune/errors.hpp"

namespace headprune {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Labels are 1 for the positive class ("Yes") and 0 otherwise.
inline ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) {
    throw UsageError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(gold.size()) + " gold labels");
  }
  if (gold.empty()) throw UsageError("confusion: no examples");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predictions[i] != 0, g = gold[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct EvalReport {
  double precision = 0, recall = 0, f1 = 0, accuracy = 0;
  double macro_precision = 0, macro_recall = 0;
  double weighted_precision = 0, weighted_recall = 0;
  ConfusionCounts counts;
  std::string task;
  std::size_t n = 0;
  // Set when the corresponding ratio had an empty denominator and was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den, bool* undefined = nullptr) {
  if (den == 0) {
    if (undefined) *undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

inline double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace detail

inline EvalReport metrics(const ConfusionCounts& c, std::string task = {}) {
  const std::size_t total = c.total();
  if (total == 0) throw UsageError("metrics: no examples");
  EvalReport r;
  r.counts = c;
  r.task = std::move(task);
  r.n = total;
  r.precision = detail::ratio(c.tp, c.tp + c.fp, &r.precision_undefined);
  r.recall = detail::ratio(c.tp, c.tp + c.fn, &r.recall_undefined);
  r.f1 = detail::harmonic(r.precision, r.recall);
  r.accuracy = detail::ratio(c.tp + c.tn, total);

  const double neg_precision = detail::ratio(c.tn, c.tn + c.fn);
  const double neg_recall = detail::ratio(c.tn, c.tn + c.fp);
  r.macro_precision = (r.precision + neg_precision) / 2.0;
  r.macro_recall = (r.recall + neg_recall) / 2.0;

  const double pos_support = static_cast<double>(c.tp + c.fn);
  const double neg_support = static_cast<double>(c.tn + c.fp);
  const double n = static_cast<double>(total);
  r.weighted_precision = (r.precision * pos_support + neg_precision * neg_support) / n;
  r.weighted_recall = (r.recall * pos_support + neg_recall * neg_support) / n;
  return r;
}

struct MetricRow {
  const char* label;
  double EvalReport::*field;
};

/// Report row order.
inline constexpr MetricRow kMetricRows[] = {
    {"Precision", &EvalReport::precision},
    {"Recall", &EvalReport::recall},
    {"F1-Score", &EvalReport::f1},
    {"Accuracy", &EvalReport::accuracy},
    {"Macro Avg Precision", &EvalReport::macro_precision},
    {"Macro Avg Recall", &EvalReport::macro_recall},
    {"Weighted Avg Precision", &EvalReport::weighted_precision},
    {"Weighted Avg Recall", &EvalReport::weighted_recall},
};

inline std::string format_2dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string format_signed_2dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return std::string(buf) == "-0.00" ? "+0.00" : buf;
}

namespace detail {

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace detail

/// Aligned plain-text table, one metric per row, values to 2 decimals.
inline std::string render_metrics_table(const EvalReport& r, const std::string& header = "Model") {
  const std::size_t w = std::max<std::size_t>(header.size(), 6);
  std::string out = detail::pad_right("Metric", 24) + detail::pad_left(header, w) + '\n';
  for (const auto& row : kMetricRows) out += detail::pad_right(row.label, 24) + detail::pad_left(format_2dp(r.*row.field), w) + '\n';
  return out;
}

/// Side-by-side original / pruned / delta table.
inline std::string render_comparison_table(const EvalReport& original, const EvalReport& pruned) {
  std::string out = detail::pad_right("Metric", 24) + detail::pad_left("Original Model", 16) +
                    detail::pad_left("Pruned Model", 14) + detail::pad_left("Delta", 8) + '\n';
  for (const auto& row : kMetricRows) {
    out += detail::pad_right(row.label, 24) + detail::pad_left(format_2dp(original.*row.field), 16) +
           detail::pad_left(format_2dp(pruned.*row.field), 14) +
           detail::pad_left(format_signed_2dp(pruned.*row.field - original.*row.field), 8) + '\n';
  }
  return out;
}

}  // namespace headprune
