#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "msclstm/errors.hpp"

namespace msclstm {

/// Rows are actual labels, columns predicted; 0 = Normal, 1 = Anomaly.
struct ConfusionMatrix {
  std::uint64_t tn = 0, fp = 0, fn = 0, tp = 0;

  std::uint64_t total() const { return tn + fp + fn + tp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size())
    throw ValidationError("confusion: " + std::to_string(y_true.size()) + " labels vs " +
                          std::to_string(y_pred.size()) + " predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int a = y_true[i], p = y_pred[i];
    if ((a != 0 && a != 1) || (p != 0 && p != 1))
      throw ValidationError("confusion: label outside {0,1} at index " + std::to_string(i));
    if (a == 0) ++(p == 0 ? cm.tn : cm.fp);
    else ++(p == 0 ? cm.fn : cm.tp);
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::uint64_t support = 0;
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};

struct EvalReport {
  ConfusionMatrix matrix;
  ClassMetrics normal, anomaly;
  double accuracy = 0;

  /// Names of metrics whose denominator was zero, e.g. "anomaly.recall".
  std::vector<std::string> flagged() const {
    std::vector<std::string> out;
    const auto add = [&](const char* cls, const ClassMetrics& m) {
      if (m.precision_undefined) out.push_back(std::string(cls) + ".precision");
      if (m.recall_undefined) out.push_back(std::string(cls) + ".recall");
      if (m.f1_undefined) out.push_back(std::string(cls) + ".f1");
    };
    add("normal", normal);
    add("anomaly", anomaly);
    return out;
  }
};

namespace detail {

/// One-vs-rest metrics for a class given its own tp/fp/fn counts.
inline ClassMetrics class_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassMetrics m;
  m.support = tp + fn;
  const auto ratio = [](std::uint64_t num, std::uint64_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(tp, tp + fp, m.precision_undefined);
  m.recall = ratio(tp, tp + fn, m.recall_undefined);
  m.f1_undefined = m.precision + m.recall == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

}  // namespace detail

inline EvalReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("report: empty confusion matrix");
  EvalReport r;
  r.matrix = cm;
  r.normal = detail::class_metrics(cm.tn, cm.fn, cm.fp);
  r.anomaly = detail::class_metrics(cm.tp, cm.fp, cm.fn);
  r.accuracy = static_cast<double>(cm.tn + cm.tp) / static_cast<double>(cm.total());
  return r;
}

/// Integer percent, halves rounded up.
inline long percent_half_up(double v) { return static_cast<long>(std::floor(v * 100.0 + 0.5)); }

enum class ReportFormat { text, json };

inline nlohmann::json report_json(const EvalReport& r) {
  const auto cls = [](const ClassMetrics& m) {
    return nlohmann::json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  };
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["classes"] = {{"normal", cls(r.normal)}, {"anomaly", cls(r.anomaly)}};
  j["confusion"] = {{"tn", r.matrix.tn}, {"fp", r.matrix.fp}, {"fn", r.matrix.fn}, {"tp", r.matrix.tp}};
  j["flagged"] = r.flagged();
  return j;
}

/// Rebuilds a report from its JSON form; metrics are recomputed from the
/// confusion counts and checked against the stored values.
inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    const auto& c = j.at("confusion");
    const ConfusionMatrix cm{c.at("tn").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(),
                             c.at("fn").get<std::uint64_t>(), c.at("tp").get<std::uint64_t>()};
    EvalReport r = report(cm);
    if (j.at("accuracy").get<double>() != r.accuracy)
      throw FormatError("report JSON: accuracy disagrees with confusion counts");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
}

/// Text layout: Normal / Anomaly / Accuracy rows with integer percentages.
/// Flagged metrics carry a trailing '*'. A nonzero `epochs` fills the
/// accuracy row's trailing cells.
inline std::string format_report(const EvalReport& r, ReportFormat kind, int epochs = 0) {
  if (kind == ReportFormat::json) return report_json(r).dump(2) + "\n";
  const auto cell = [](double v, bool flag) {
    return std::to_string(percent_half_up(v)) + "%" + (flag ? "*" : "");
  };
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line, "%-10s %14s %11s %13s %9s\n", "Labels", "Precision (%)", "Recall (%)",
                "F1-score (%)", "Support");
  out += line;
  const auto row = [&](const char* name, const ClassMetrics& m) {
    std::snprintf(line, sizeof line, "%-10s %14s %11s %13s %9llu\n", name,
                  cell(m.precision, m.precision_undefined).c_str(), cell(m.recall, m.recall_undefined).c_str(),
                  cell(m.f1, m.f1_undefined).c_str(), static_cast<unsigned long long>(m.support));
    out += line;
  };
  row("Normal", r.normal);
  row("Anomaly", r.anomaly);
  if (epochs > 0)
    std::snprintf(line, sizeof line, "%-10s %14s %11s %13d\n", "Accuracy", cell(r.accuracy, false).c_str(),
                  "Epochs", epochs);
  else
    std::snprintf(line, sizeof line, "%-10s %14s\n", "Accuracy", cell(r.accuracy, false).c_str());
  out += line;
  if (!r.flagged().empty()) out += "* zero denominator, reported as 0\n";
  return out;
}

}  // namespace msclstm
