#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "leafvit/errors.hpp"

namespace leafvit {

// K x K counts; entry (i, j) is the number of samples of true class i
// predicted as class j.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;  // row-major
  std::vector<std::string> class_names;

  std::uint64_t& at(std::size_t truth, std::size_t pred) {
    return counts[truth * num_classes + pred];
  }
  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * num_classes + pred];
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts) t += c;
    return t;
  }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

using ClassReport = std::vector<ClassMetrics>;

struct SummaryReport {
  double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double hamming_loss = 0.0;
};

inline ConfusionMatrix confusion_matrix(std::span<const std::uint32_t> truths,
                                        std::span<const std::uint32_t> preds,
                                        std::size_t num_classes,
                                        std::vector<std::string> class_names = {}) {
  if (truths.empty()) throw DataError("confusion_matrix: empty label lists");
  if (truths.size() != preds.size())
    throw DataError("confusion_matrix: " + std::to_string(truths.size()) +
                    " truths vs " + std::to_string(preds.size()) + " predictions");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(num_classes * num_classes, 0);
  cm.class_names = std::move(class_names);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= num_classes || preds[i] >= num_classes)
      throw DataError("confusion_matrix: label " +
                      std::to_string(std::max(truths[i], preds[i])) +
                      " out of range for " + std::to_string(num_classes) +
                      " classes");
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

namespace detail {
inline double safe_ratio(double num, double den) {
  return den == 0.0 ? 0.0 : num / den;
}
inline double f1_of(double p, double r) {
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}
}  // namespace detail

// Per-class precision, recall, F1 and support. Zero denominators yield 0.
inline ClassReport per_class_metrics(const ConfusionMatrix& cm) {
  ClassReport report(cm.num_classes);
  for (std::size_t c = 0; c < cm.num_classes; ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (std::size_t o = 0; o < cm.num_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    ClassMetrics& m = report[c];
    m.precision = detail::safe_ratio(static_cast<double>(tp),
                                     static_cast<double>(tp + fp));
    m.recall = detail::safe_ratio(static_cast<double>(tp),
                                  static_cast<double>(tp + fn));
    m.f1 = detail::f1_of(m.precision, m.recall);
    m.support = tp + fn;
  }
  return report;
}

// Micro averages pool TP/FP/FN across classes before dividing; macro
// averages are unweighted means of the per-class metrics.
inline SummaryReport averaged_metrics(const ConfusionMatrix& cm) {
  SummaryReport s;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) {
    tp += cm.at(c, c);
    for (std::size_t o = 0; o < cm.num_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
  }
  s.micro_precision = detail::safe_ratio(static_cast<double>(tp),
                                         static_cast<double>(tp + fp));
  s.micro_recall = detail::safe_ratio(static_cast<double>(tp),
                                      static_cast<double>(tp + fn));
  s.micro_f1 = detail::f1_of(s.micro_precision, s.micro_recall);

  const ClassReport per_class = per_class_metrics(cm);
  for (const ClassMetrics& m : per_class) {
    s.macro_precision += m.precision;
    s.macro_recall += m.recall;
    s.macro_f1 += m.f1;
  }
  const auto k = static_cast<double>(cm.num_classes);
  s.macro_precision /= k;
  s.macro_recall /= k;
  s.macro_f1 /= k;

  // Same division route as hamming_loss() so the two agree bit-exactly.
  const std::uint64_t total = cm.total();
  s.hamming_loss = total == 0 ? 0.0
                              : static_cast<double>(total - tp) /
                                    static_cast<double>(total);
  return s;
}

// Fraction of positions where prediction differs from truth; equals
// 1 - accuracy for single-label classification.
inline double hamming_loss(std::span<const std::uint32_t> truths,
                           std::span<const std::uint32_t> preds) {
  if (truths.empty()) throw DataError("hamming_loss: empty label lists");
  if (truths.size() != preds.size())
    throw DataError("hamming_loss: " + std::to_string(truths.size()) +
                    " truths vs " + std::to_string(preds.size()) + " predictions");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truths.size(); ++i)
    if (truths[i] != preds[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(truths.size());
}

// Fixed-width text table: one row per class, micro/macro rows, Hamming-loss
// row. Metrics printed to 3 decimals; byte-stable for a given input.
inline std::string render_report(const ClassReport& per_class,
                                 const SummaryReport& summary,
                                 const std::vector<std::string>& class_names) {
  if (per_class.empty()) throw DataError("render_report: no classes");
  if (class_names.size() != per_class.size())
    throw DataError("render_report: " + std::to_string(class_names.size()) +
                    " names for " + std::to_string(per_class.size()) + " classes");

  std::size_t name_w = std::string("Hamming Loss").size();
  for (const auto& n : class_names) name_w = std::max(name_w, n.size());

  auto fmt_row = [&](const std::string& name, double p, double r, double f1,
                     const std::string& support) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-*s  %9.3f  %9.3f  %9.3f  %8s\n",
                  static_cast<int>(name_w), name.c_str(), p, r, f1,
                  support.c_str());
    return std::string(buf);
  };

  std::string out;
  {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s  %9s  %8s\n",
                  static_cast<int>(name_w), "Class", "Precision", "Recall",
                  "F1-Score", "Support");
    out += buf;
  }
  std::uint64_t total_support = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const ClassMetrics& m = per_class[c];
    total_support += m.support;
    out += fmt_row(class_names[c], m.precision, m.recall, m.f1,
                   std::to_string(m.support));
  }
  out += fmt_row("Micro Avg", summary.micro_precision, summary.micro_recall,
                 summary.micro_f1, std::to_string(total_support));
  out += fmt_row("Macro Avg", summary.macro_precision, summary.macro_recall,
                 summary.macro_f1, std::to_string(total_support));
  {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-*s  %9.3f\n", static_cast<int>(name_w),
                  "Hamming Loss", summary.hamming_loss);
    out += buf;
  }
  return out;
}

// Machine-readable companion of render_report. Rows: one per class, then
// micro_avg, macro_avg and hamming_loss. The names micro_avg, macro_avg and
// hamming_loss are reserved and may not be used as class names.
inline std::string report_to_csv(const ClassReport& per_class,
                                 const SummaryReport& summary,
                                 const std::vector<std::string>& class_names) {
  if (per_class.empty()) throw DataError("report_to_csv: no classes");
  if (class_names.size() != per_class.size())
    throw DataError("report_to_csv: name/class count mismatch");
  for (const auto& n : class_names)
    if (n == "micro_avg" || n == "macro_avg" || n == "hamming_loss")
      throw DataError("report_to_csv: class name \"" + n + "\" is reserved");

  char buf[256];
  std::string out = "name,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const ClassMetrics& m = per_class[c];
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%llu\n",
                  class_names[c].c_str(), m.precision, m.recall, m.f1,
                  static_cast<unsigned long long>(m.support));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "micro_avg,%.9g,%.9g,%.9g,\n",
                summary.micro_precision, summary.micro_recall, summary.micro_f1);
  out += buf;
  std::snprintf(buf, sizeof(buf), "macro_avg,%.9g,%.9g,%.9g,\n",
                summary.macro_precision, summary.macro_recall, summary.macro_f1);
  out += buf;
  std::snprintf(buf, sizeof(buf), "hamming_loss,%.9g,,,\n", summary.hamming_loss);
  out += buf;
  return out;
}

}  // namespace leafvit
