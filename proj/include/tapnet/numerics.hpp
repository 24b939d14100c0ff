#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tapnet/errors.hpp"

namespace tapnet {

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Row-major dense matrix of 64-bit floats.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Deterministic splitmix64 generator. The raw 64-bit stream depends only on
// the seed, so identical seeds replay identical draws on any platform.
struct Rng {
  std::uint64_t state = 0;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; the spare is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925287;
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  // Uniform integer in [0, n). Rejection sampling, so no modulo bias.
  std::size_t below(std::size_t n) {
    if (n == 0) throw ParameterError("Rng::below: n must be >= 1");
    const std::uint64_t nn = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % nn;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % nn);
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.rows, a.cols) +
                     " * " + shape_str(b.rows, b.cols));
  }
  Mat out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// y = W x  (x has length W.cols, result length W.rows)
inline void matvec(const Mat& w, const double* x, double* y) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

inline std::vector<double> matvec(const Mat& w, const std::vector<double>& x) {
  if (x.size() != w.cols) {
    throw ShapeError("matvec: vector length " + std::to_string(x.size()) +
                     " does not match matrix " + shape_str(w.rows, w.cols));
  }
  std::vector<double> y(w.rows);
  matvec(w, x.data(), y.data());
  return y;
}

// y += W^T x  (x has length W.rows, result accumulated over W.cols)
inline void matvec_t_acc(const Mat& w, const double* x, double* y) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    const double* row = w.row(i);
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += xi * row[j];
  }
}

// A += u v^T  (A is |u| x |v|)
inline void add_outer(Mat& a, const double* u, const double* v) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double ui = u[i];
    double* row = a.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) row[j] += ui * v[j];
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline bool all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

inline bool all_finite(const std::vector<double>& v) {
  return all_finite(v.data(), v.size());
}

// Entries i.i.d. uniform on +-sqrt(6 / (rows + cols)).
inline Mat glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("glorot_uniform: zero dimension " + shape_str(rows, cols));
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (double& x : m.data) x = rng.uniform(-limit, limit);
  return m;
}

// Max-subtracted softmax; positive outputs summing to 1.
inline void softmax_inplace(double* x, std::size_t n) {
  if (n == 0) throw ShapeError("softmax: empty input");
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  for (std::size_t i = 0; i < n; ++i) x[i] /= sum;
}

inline std::vector<double> stable_softmax(const std::vector<double>& v) {
  if (v.empty()) throw ShapeError("stable_softmax: empty input");
  std::vector<double> out = v;
  softmax_inplace(out.data(), out.size());
  return out;
}

}  // namespace tapnet
