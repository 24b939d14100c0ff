#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tapnet/errors.hpp"
#include "tapnet/model.hpp"

namespace tapnet {

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<long long> counts;  // row-major, rows = true class

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : classes(k), counts(k * k, 0) {}

  long long& at(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
  long long at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }

  long long total() const {
    long long s = 0;
    for (long long c : counts) s += c;
    return s;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, std::size_t k) {
  if (y_true.size() != y_pred.size()) {
    throw ShapeError("confusion: " + std::to_string(y_true.size()) + " true labels vs " +
                     std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if (t < 0 || static_cast<std::size_t>(t) >= k || p < 0 ||
        static_cast<std::size_t>(p) >= k) {
      throw DataError("confusion: label out of range at row " + std::to_string(i));
    }
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;
  double accuracy = 0.0;  // percent
  bool zero_denominator = false;
};

// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their harmonic mean; zero
// denominators yield 0.0 and raise the warning flag. Macro rows are the
// unweighted class means; accuracy is trace/total.
inline ClassificationReport report(const ConfusionMatrix& cm) {
  if (cm.classes == 0 || cm.total() == 0) {
    throw DataError("report: empty confusion matrix");
  }
  ClassificationReport rep;
  rep.per_class.resize(cm.classes);
  long long trace = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) {
    const long long tp = cm.at(c, c);
    trace += tp;
    long long fp = 0, fn = 0;
    for (std::size_t o = 0; o < cm.classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    ClassMetrics& m = rep.per_class[c];
    if (tp + fp == 0) {
      rep.zero_denominator = true;
    } else {
      m.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
      rep.zero_denominator = true;
    } else {
      m.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    rep.macro.precision += m.precision;
    rep.macro.recall += m.recall;
    rep.macro.f1 += m.f1;
  }
  const double k = static_cast<double>(cm.classes);
  rep.macro.precision /= k;
  rep.macro.recall /= k;
  rep.macro.f1 /= k;
  rep.accuracy = 100.0 * static_cast<double>(trace) / static_cast<double>(cm.total());
  return rep;
}

inline std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Plain-text table: per-class rows, macro-average row, accuracy row.
inline std::string render_report(const ClassificationReport& rep) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%-12s%12s%12s%12s\n", "Class", "Precision",
                "Recall", "F1-Score");
  out += line;
  for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
    const ClassMetrics& m = rep.per_class[c];
    std::snprintf(line, sizeof(line), "%-12zu%12.2f%12.2f%12.2f\n", c, m.precision,
                  m.recall, m.f1);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-12s%12.2f%12.2f%12.2f\n", "Macro Avg",
                rep.macro.precision, rep.macro.recall, rep.macro.f1);
  out += line;
  std::snprintf(line, sizeof(line), "%-12s%12s%12s%12.2f\n", "Accuracy", "", "",
                rep.accuracy);
  out += line;
  if (rep.zero_denominator) {
    out += "warning: some precision/recall denominators were zero (reported as 0.00)\n";
  }
  return out;
}

inline nlohmann::json report_to_json(const ClassificationReport& rep) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
    classes.push_back({{"class", c},
                       {"precision", rep.per_class[c].precision},
                       {"recall", rep.per_class[c].recall},
                       {"f1", rep.per_class[c].f1}});
  }
  return nlohmann::json{{"classes", classes},
                        {"macro",
                         {{"precision", rep.macro.precision},
                          {"recall", rep.macro.recall},
                          {"f1", rep.macro.f1}}},
                        {"accuracy", rep.accuracy},
                        {"zero_denominator_warning", rep.zero_denominator}};
}

inline void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write confusion matrix: " + path);
  out << "true\\pred";
  for (std::size_t p = 0; p < cm.classes; ++p) out << ',' << p;
  out << '\n';
  for (std::size_t t = 0; t < cm.classes; ++t) {
    out << t;
    for (std::size_t p = 0; p < cm.classes; ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// Curve CSV: one row per epoch, columns epoch,train_loss,train_acc,val_loss,val_acc.
inline void emit_curves(const TrainHistory& history, const std::string& path) {
  if (history.epochs.empty()) throw DataError("emit_curves: empty history");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curves: " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[128];
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochStats& s = history.epochs[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e + 1, s.train_loss,
                  s.train_acc, s.val_loss, s.val_acc);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tapnet
