#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tapnet/errors.hpp"
#include "tapnet/numerics.hpp"

namespace tapnet {

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Dataset {
  Mat features;             // N x F
  std::vector<int> labels;  // empty when unlabeled
  bool has_labels = false;
  NormStats norm;
  bool normalized = false;
  std::string provenance;

  std::size_t n() const { return features.rows; }
  std::size_t width() const { return features.cols; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace detail

// Feature CSV: header `f0..f{F-1}[,label]`, one observation per row.
// Data rows are referred to 1-based in error messages.
inline Dataset load_feature_csv(const std::string& path, int max_label = 5) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": missing header row");
  }
  std::vector<std::string> header = detail::split_csv_line(line);
  bool has_labels = false;
  std::size_t width = header.size();
  if (!header.empty() && detail::trim(header.back()) == "label") {
    has_labels = true;
    width -= 1;
  }
  if (width == 0) throw DataError(path + ": header has no feature columns");
  for (std::size_t i = 0; i < width; ++i) {
    if (detail::trim(header[i]) != "f" + std::to_string(i)) {
      throw DataError(path + ": header column " + std::to_string(i) +
                      " is '" + header[i] + "', expected 'f" + std::to_string(i) + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row_no;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ": row " + std::to_string(row_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < width; ++i) {
      double v = 0.0;
      if (!detail::parse_double(cells[i], v)) {
        throw DataError(path + ": row " + std::to_string(row_no) + " column f" +
                        std::to_string(i) + ": cannot parse '" + cells[i] + "'");
      }
      if (!std::isfinite(v)) {
        throw DataError(path + ": row " + std::to_string(row_no) + " column f" +
                        std::to_string(i) + ": non-finite value '" + cells[i] + "'");
      }
      values.push_back(v);
    }
    if (has_labels) {
      double v = 0.0;
      if (!detail::parse_double(cells[width], v) || v != std::floor(v)) {
        throw DataError(path + ": row " + std::to_string(row_no) +
                        ": label '" + cells[width] + "' is not an integer");
      }
      const int lbl = static_cast<int>(v);
      if (lbl < 0 || lbl >= max_label) {
        throw DataError(path + ": row " + std::to_string(row_no) + ": label " +
                        std::to_string(lbl) + " outside [0, " + std::to_string(max_label) + ")");
      }
      labels.push_back(lbl);
    }
    ++rows;
  }

  Dataset ds;
  ds.features = Mat(rows, width);
  ds.features.data = std::move(values);
  ds.labels = std::move(labels);
  ds.has_labels = has_labels;
  ds.provenance = path;
  return ds;
}

inline void write_feature_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feature CSV: " + path);
  for (std::size_t i = 0; i < ds.width(); ++i) {
    if (i) out << ',';
    out << 'f' << i;
  }
  if (ds.has_labels) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (std::size_t c = 0; c < ds.width(); ++c) {
      if (c) out << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(r, c));
      out << buf;
    }
    if (ds.has_labels) out << ',' << ds.labels[r];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// Per-column mean and population standard deviation over the training split.
inline NormStats zscore_fit(const Dataset& train) {
  if (train.n() == 0) throw DataError("zscore_fit: empty dataset");
  const std::size_t f = train.width();
  NormStats st;
  st.mean.assign(f, 0.0);
  st.stddev.assign(f, 0.0);
  for (std::size_t r = 0; r < train.n(); ++r) {
    for (std::size_t c = 0; c < f; ++c) st.mean[c] += train.features(r, c);
  }
  for (std::size_t c = 0; c < f; ++c) st.mean[c] /= static_cast<double>(train.n());
  for (std::size_t r = 0; r < train.n(); ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double d = train.features(r, c) - st.mean[c];
      st.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < f; ++c) {
    st.stddev[c] = std::sqrt(st.stddev[c] / static_cast<double>(train.n()));
  }
  return st;
}

inline Dataset zscore_apply(const NormStats& st, const Dataset& ds) {
  if (st.mean.size() != ds.width()) {
    throw ShapeError("zscore_apply: stats for " + std::to_string(st.mean.size()) +
                     " columns, dataset has " + std::to_string(ds.width()));
  }
  Dataset out = ds;
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (std::size_t c = 0; c < ds.width(); ++c) {
      const double sd = std::max(st.stddev[c], 1e-12);
      out.features(r, c) = (ds.features(r, c) - st.mean[c]) / sd;
    }
  }
  out.norm = st;
  out.normalized = true;
  return out;
}

// Per-class proportions preserved within rounding; each class keeps at least
// one sample on both sides. Deterministic for a given seed.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds,
                                                    double test_fraction,
                                                    std::uint64_t seed) {
  if (!ds.has_labels) throw DataError("stratified_split: dataset has no labels");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ParameterError("stratified_split: test_fraction must be in (0, 1), got " +
                         std::to_string(test_fraction));
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.n(); ++i) by_class[ds.labels[i]].push_back(i);
  for (const auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      throw DataError("stratified_split: class " + std::to_string(cls) +
                      " has fewer than 2 samples");
    }
  }
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    const auto n_c = idx.size();
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_c) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n_c - 1);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + n_test);
    train_idx.insert(train_idx.end(), idx.begin() + n_test, idx.end());
  }
  auto take = [&](const std::vector<std::size_t>& idx) {
    Dataset out;
    out.features = Mat(idx.size(), ds.width());
    out.labels.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* src = ds.features.row(idx[r]);
      std::copy(src, src + ds.width(), out.features.row(r));
      out.labels.push_back(ds.labels[idx[r]]);
    }
    out.has_labels = true;
    out.norm = ds.norm;
    out.normalized = ds.normalized;
    out.provenance = ds.provenance;
    return out;
  };
  return {take(train_idx), take(test_idx)};
}

// Five unit-variance Gaussian clusters whose means sit `separation` standard
// deviations from the origin along mutually orthogonal random directions.
inline Dataset synth_generate(std::size_t n_per_class, double separation,
                              std::uint64_t seed, std::size_t width = 57,
                              std::size_t num_classes = 5) {
  if (n_per_class == 0) throw ParameterError("synth_generate: n_per_class must be >= 1");
  if (separation < 0.0) throw ParameterError("synth_generate: separation must be >= 0");
  if (width < num_classes) {
    throw ParameterError("synth_generate: width must be >= number of classes");
  }
  Rng rng(seed);
  // Gram-Schmidt over random Gaussian draws.
  std::vector<std::vector<double>> dirs;
  while (dirs.size() < num_classes) {
    std::vector<double> v(width);
    for (double& x : v) x = rng.normal();
    for (const auto& d : dirs) {
      const double proj = dot(v.data(), d.data(), width);
      for (std::size_t i = 0; i < width; ++i) v[i] -= proj * d[i];
    }
    const double nrm = std::sqrt(dot(v.data(), v.data(), width));
    if (nrm < 1e-8) continue;
    for (double& x : v) x /= nrm;
    dirs.push_back(std::move(v));
  }
  Dataset ds;
  ds.features = Mat(n_per_class * num_classes, width);
  ds.labels.reserve(n_per_class * num_classes);
  ds.has_labels = true;
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      double* dst = ds.features.row(row);
      for (std::size_t c = 0; c < width; ++c) {
        dst[c] = separation * dirs[cls][c] + rng.normal();
      }
      ds.labels.push_back(static_cast<int>(cls));
    }
  }
  ds.provenance = "synthetic(n=" + std::to_string(n_per_class) + "/class, sep=" +
                  std::to_string(separation) + ", seed=" + std::to_string(seed) + ")";
  return ds;
}

}  // namespace tapnet
