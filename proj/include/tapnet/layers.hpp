#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "tapnet/errors.hpp"
#include "tapnet/numerics.hpp"

namespace tapnet {

// A T x C sequence of feature frames, row-major.
struct SeqTensor {
  std::size_t timesteps = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  SeqTensor() = default;
  SeqTensor(std::size_t t, std::size_t c, double fill = 0.0)
      : timesteps(t), channels(c), data(t * c, fill) {}

  double& at(std::size_t t, std::size_t c) { return data[t * channels + c]; }
  double at(std::size_t t, std::size_t c) const { return data[t * channels + c]; }
  double* frame(std::size_t t) { return data.data() + t * channels; }
  const double* frame(std::size_t t) const { return data.data() + t * channels; }
};

inline SeqTensor reverse_time(const SeqTensor& x) {
  SeqTensor out(x.timesteps, x.channels);
  for (std::size_t t = 0; t < x.timesteps; ++t) {
    const double* src = x.frame(x.timesteps - 1 - t);
    std::copy(src, src + x.channels, out.frame(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1-D convolution (valid padding, stride 1, ReLU)
// ---------------------------------------------------------------------------

struct Conv1DParams {
  std::size_t kernel = 3;
  std::size_t in_channels = 1;
  std::size_t filters = 64;
  std::vector<double> weights;  // indexed [k][cin][f]
  std::vector<double> bias;     // per filter

  Conv1DParams() = default;
  Conv1DParams(std::size_t k, std::size_t cin, std::size_t f)
      : kernel(k), in_channels(cin), filters(f), weights(k * cin * f, 0.0), bias(f, 0.0) {}

  double& w(std::size_t k, std::size_t c, std::size_t f) {
    return weights[(k * in_channels + c) * filters + f];
  }
  double w(std::size_t k, std::size_t c, std::size_t f) const {
    return weights[(k * in_channels + c) * filters + f];
  }

  static Conv1DParams init(std::size_t k, std::size_t cin, std::size_t f, Rng& rng) {
    Conv1DParams p(k, cin, f);
    Mat m = glorot_uniform(k * cin, f, rng);
    p.weights = std::move(m.data);
    return p;
  }
};

struct Conv1DCache {
  SeqTensor input;
  SeqTensor pre;  // pre-activation, kept for the ReLU derivative
};

struct Conv1DGrads {
  std::vector<double> weights;
  std::vector<double> bias;
};

inline std::pair<SeqTensor, Conv1DCache> conv1d_forward(const SeqTensor& x,
                                                        const Conv1DParams& p) {
  if (x.channels != p.in_channels) {
    throw ShapeError("conv1d: input has " + std::to_string(x.channels) +
                     " channels, kernel expects " + std::to_string(p.in_channels));
  }
  if (x.timesteps < p.kernel) {
    throw ShapeError("conv1d: sequence length " + std::to_string(x.timesteps) +
                     " shorter than kernel " + std::to_string(p.kernel));
  }
  const std::size_t out_t = x.timesteps - p.kernel + 1;
  SeqTensor pre(out_t, p.filters);
  for (std::size_t t = 0; t < out_t; ++t) {
    double* prow = pre.frame(t);
    for (std::size_t f = 0; f < p.filters; ++f) prow[f] = p.bias[f];
    for (std::size_t k = 0; k < p.kernel; ++k) {
      const double* xrow = x.frame(t + k);
      for (std::size_t c = 0; c < p.in_channels; ++c) {
        const double xv = xrow[c];
        const double* wrow = &p.weights[(k * p.in_channels + c) * p.filters];
        for (std::size_t f = 0; f < p.filters; ++f) prow[f] += xv * wrow[f];
      }
    }
  }
  SeqTensor out = pre;
  for (double& v : out.data) v = std::max(v, 0.0);
  Conv1DCache cache{x, std::move(pre)};
  return {std::move(out), std::move(cache)};
}

inline std::pair<Conv1DGrads, SeqTensor> conv1d_backward(const SeqTensor& d_out,
                                                         const Conv1DCache& cache,
                                                         const Conv1DParams& p) {
  const std::size_t out_t = cache.pre.timesteps;
  if (d_out.timesteps != out_t || d_out.channels != p.filters) {
    throw ShapeError("conv1d_backward: upstream gradient " +
                     shape_str(d_out.timesteps, d_out.channels) +
                     " does not match cached output " + shape_str(out_t, p.filters));
  }
  Conv1DGrads g;
  g.weights.assign(p.weights.size(), 0.0);
  g.bias.assign(p.filters, 0.0);
  SeqTensor dx(cache.input.timesteps, cache.input.channels);
  std::vector<double> dpre(p.filters);
  for (std::size_t t = 0; t < out_t; ++t) {
    const double* drow = d_out.frame(t);
    const double* prow = cache.pre.frame(t);
    for (std::size_t f = 0; f < p.filters; ++f) {
      dpre[f] = prow[f] > 0.0 ? drow[f] : 0.0;
      g.bias[f] += dpre[f];
    }
    for (std::size_t k = 0; k < p.kernel; ++k) {
      const double* xrow = cache.input.frame(t + k);
      double* dxrow = dx.frame(t + k);
      for (std::size_t c = 0; c < p.in_channels; ++c) {
        const double xv = xrow[c];
        double* gw = &g.weights[(k * p.in_channels + c) * p.filters];
        const double* wrow = &p.weights[(k * p.in_channels + c) * p.filters];
        double acc = 0.0;
        for (std::size_t f = 0; f < p.filters; ++f) {
          gw[f] += xv * dpre[f];
          acc += wrow[f] * dpre[f];
        }
        dxrow[c] += acc;
      }
    }
  }
  return {std::move(g), std::move(dx)};
}

// ---------------------------------------------------------------------------
// 1-D max pooling (non-overlapping windows, trailing partial window dropped)
// ---------------------------------------------------------------------------

struct PoolCache {
  std::size_t pool = 0;
  std::size_t in_timesteps = 0;
  std::size_t channels = 0;
  std::vector<std::size_t> argmax;  // input timestep per pooled cell, [t'][c]
};

inline std::pair<SeqTensor, PoolCache> maxpool1d_forward(const SeqTensor& x,
                                                         std::size_t pool) {
  if (pool == 0) throw ParameterError("maxpool1d: pool size must be >= 1");
  const std::size_t out_t = x.timesteps / pool;
  SeqTensor out(out_t, x.channels);
  PoolCache cache{pool, x.timesteps, x.channels, std::vector<std::size_t>(out_t * x.channels, 0)};
  for (std::size_t t = 0; t < out_t; ++t) {
    for (std::size_t c = 0; c < x.channels; ++c) {
      std::size_t best = t * pool;
      double best_v = x.at(best, c);
      for (std::size_t k = 1; k < pool; ++k) {
        const double v = x.at(t * pool + k, c);
        if (v > best_v) {
          best_v = v;
          best = t * pool + k;
        }
      }
      out.at(t, c) = best_v;
      cache.argmax[t * x.channels + c] = best;
    }
  }
  return {std::move(out), std::move(cache)};
}

inline SeqTensor maxpool1d_backward(const SeqTensor& d_out, const PoolCache& cache) {
  const std::size_t out_t = cache.in_timesteps / cache.pool;
  if (d_out.timesteps != out_t || d_out.channels != cache.channels) {
    throw ShapeError("maxpool1d_backward: upstream gradient " +
                     shape_str(d_out.timesteps, d_out.channels) +
                     " does not match cached output " + shape_str(out_t, cache.channels));
  }
  SeqTensor dx(cache.in_timesteps, cache.channels);
  for (std::size_t t = 0; t < out_t; ++t) {
    for (std::size_t c = 0; c < cache.channels; ++c) {
      dx.at(cache.argmax[t * cache.channels + c], c) += d_out.at(t, c);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

enum class Activation { identity, relu, tanh, softmax };

struct DenseCache {
  std::vector<double> input;
  std::vector<double> pre;
  std::vector<double> out;
  Activation act = Activation::identity;
};

struct DenseGrads {
  Mat w;
  std::vector<double> b;
};

inline std::pair<std::vector<double>, DenseCache> dense_forward(
    const std::vector<double>& x, const Mat& w, const std::vector<double>& b,
    Activation act) {
  if (x.size() != w.cols) {
    throw ShapeError("dense: input length " + std::to_string(x.size()) +
                     " does not match weights " + shape_str(w.rows, w.cols));
  }
  if (b.size() != w.rows) {
    throw ShapeError("dense: bias length " + std::to_string(b.size()) +
                     " does not match weights " + shape_str(w.rows, w.cols));
  }
  std::vector<double> pre = matvec(w, x);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += b[i];
  std::vector<double> out = pre;
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (double& v : out) v = std::max(v, 0.0);
      break;
    case Activation::tanh:
      for (double& v : out) v = std::tanh(v);
      break;
    case Activation::softmax:
      softmax_inplace(out.data(), out.size());
      break;
  }
  DenseCache cache{x, std::move(pre), out, act};
  return {std::move(out), std::move(cache)};
}

// Upstream gradient is w.r.t. the layer output for every activation; the
// softmax case contracts with its full Jacobian.
inline std::pair<DenseGrads, std::vector<double>> dense_backward(
    const std::vector<double>& d_out, const DenseCache& cache, const Mat& w) {
  if (d_out.size() != w.rows || cache.input.size() != w.cols) {
    throw ShapeError("dense_backward: gradient length " + std::to_string(d_out.size()) +
                     " does not match weights " + shape_str(w.rows, w.cols));
  }
  std::vector<double> dpre(d_out.size());
  switch (cache.act) {
    case Activation::identity:
      dpre = d_out;
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < d_out.size(); ++i)
        dpre[i] = cache.pre[i] > 0.0 ? d_out[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < d_out.size(); ++i)
        dpre[i] = d_out[i] * (1.0 - cache.out[i] * cache.out[i]);
      break;
    case Activation::softmax: {
      double s = 0.0;
      for (std::size_t i = 0; i < d_out.size(); ++i) s += d_out[i] * cache.out[i];
      for (std::size_t i = 0; i < d_out.size(); ++i)
        dpre[i] = cache.out[i] * (d_out[i] - s);
      break;
    }
  }
  DenseGrads g{Mat(w.rows, w.cols), dpre};
  add_outer(g.w, dpre.data(), cache.input.data());
  std::vector<double> dx(w.cols, 0.0);
  matvec_t_acc(w, dpre.data(), dx.data());
  return {std::move(g), std::move(dx)};
}

// ---------------------------------------------------------------------------
// Inverted dropout
// ---------------------------------------------------------------------------

struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double scale = 1.0;
  bool active = false;
};

inline std::pair<std::vector<double>, DropoutMask> dropout_forward(
    const std::vector<double>& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    return {x, DropoutMask{}};
  }
  DropoutMask mask;
  mask.keep.resize(x.size());
  mask.scale = 1.0 / (1.0 - rate);
  mask.active = true;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = rng.next_double() >= rate;
    mask.keep[i] = keep ? 1 : 0;
    out[i] = keep ? x[i] * mask.scale : 0.0;
  }
  return {std::move(out), std::move(mask)};
}

inline std::vector<double> dropout_backward(const std::vector<double>& d_out,
                                            const DropoutMask& mask) {
  if (!mask.active) return d_out;
  if (d_out.size() != mask.keep.size()) {
    throw ShapeError("dropout_backward: gradient length " + std::to_string(d_out.size()) +
                     " does not match mask length " + std::to_string(mask.keep.size()));
  }
  std::vector<double> dx(d_out.size());
  for (std::size_t i = 0; i < d_out.size(); ++i) {
    dx[i] = mask.keep[i] ? d_out[i] * mask.scale : 0.0;
  }
  return dx;
}

}  // namespace tapnet
