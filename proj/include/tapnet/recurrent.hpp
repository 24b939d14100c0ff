#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "tapnet/errors.hpp"
#include "tapnet/layers.hpp"
#include "tapnet/numerics.hpp"

namespace tapnet {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Weights for one LSTM direction. Gate rows are stacked in the order
// input, forget, cell candidate, output: row blocks [0,U), [U,2U), [2U,3U), [3U,4U).
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t units = 0;
  Mat wx;                 // 4U x D
  Mat wh;                 // 4U x U
  std::vector<double> b;  // 4U

  LstmParams() = default;
  LstmParams(std::size_t d, std::size_t u)
      : input_dim(d), units(u), wx(4 * u, d), wh(4 * u, u), b(4 * u, 0.0) {}

  // Glorot weights, zero biases, forget-gate bias +1.
  static LstmParams init(std::size_t d, std::size_t u, Rng& rng) {
    LstmParams p(d, u);
    p.wx = glorot_uniform(4 * u, d, rng);
    p.wh = glorot_uniform(4 * u, u, rng);
    for (std::size_t i = u; i < 2 * u; ++i) p.b[i] = 1.0;
    return p;
  }
};

struct LstmStepCache {
  std::vector<double> x;
  std::vector<double> h_prev;
  std::vector<double> c_prev;
  std::vector<double> i, f, g, o;
  std::vector<double> c;
  std::vector<double> tanh_c;
};

struct LstmStepOut {
  std::vector<double> h;
  std::vector<double> c;
  LstmStepCache cache;
};

inline LstmStepOut lstm_cell_forward(const std::vector<double>& x,
                                     const std::vector<double>& h_prev,
                                     const std::vector<double>& c_prev,
                                     const LstmParams& p) {
  const std::size_t u = p.units;
  if (x.size() != p.input_dim || h_prev.size() != u || c_prev.size() != u) {
    throw ShapeError("lstm_cell: sizes (x=" + std::to_string(x.size()) +
                     ", h=" + std::to_string(h_prev.size()) +
                     ", c=" + std::to_string(c_prev.size()) + ") do not match params (D=" +
                     std::to_string(p.input_dim) + ", U=" + std::to_string(u) + ")");
  }
  std::vector<double> pre(4 * u);
  matvec(p.wx, x.data(), pre.data());
  std::vector<double> rec(4 * u);
  matvec(p.wh, h_prev.data(), rec.data());
  for (std::size_t i = 0; i < 4 * u; ++i) pre[i] += rec[i] + p.b[i];

  LstmStepCache cache;
  cache.x = x;
  cache.h_prev = h_prev;
  cache.c_prev = c_prev;
  cache.i.resize(u);
  cache.f.resize(u);
  cache.g.resize(u);
  cache.o.resize(u);
  cache.c.resize(u);
  cache.tanh_c.resize(u);

  std::vector<double> h(u);
  for (std::size_t k = 0; k < u; ++k) {
    cache.i[k] = sigmoid(pre[k]);
    cache.f[k] = sigmoid(pre[u + k]);
    cache.g[k] = std::tanh(pre[2 * u + k]);
    cache.o[k] = sigmoid(pre[3 * u + k]);
    cache.c[k] = cache.f[k] * c_prev[k] + cache.i[k] * cache.g[k];
    cache.tanh_c[k] = std::tanh(cache.c[k]);
    h[k] = cache.o[k] * cache.tanh_c[k];
  }
  return {std::move(h), cache.c, std::move(cache)};
}

struct LstmCache {
  std::vector<LstmStepCache> steps;
};

struct LstmGrads {
  Mat wx;
  Mat wh;
  std::vector<double> b;

  explicit LstmGrads(const LstmParams& p)
      : wx(p.wx.rows, p.wx.cols), wh(p.wh.rows, p.wh.cols), b(p.b.size(), 0.0) {}
};

// Runs the cell across a sequence with zero initial states.
inline std::pair<SeqTensor, LstmCache> lstm_forward(const SeqTensor& x,
                                                    const LstmParams& p) {
  if (x.channels != p.input_dim) {
    throw ShapeError("lstm_forward: input width " + std::to_string(x.channels) +
                     " does not match params D=" + std::to_string(p.input_dim));
  }
  const std::size_t u = p.units;
  SeqTensor h_seq(x.timesteps, u);
  LstmCache cache;
  cache.steps.reserve(x.timesteps);
  std::vector<double> h(u, 0.0), c(u, 0.0);
  std::vector<double> xt(x.channels);
  for (std::size_t t = 0; t < x.timesteps; ++t) {
    const double* frame = x.frame(t);
    xt.assign(frame, frame + x.channels);
    LstmStepOut step = lstm_cell_forward(xt, h, c, p);
    h = std::move(step.h);
    c = std::move(step.c);
    std::copy(h.begin(), h.end(), h_seq.frame(t));
    cache.steps.push_back(std::move(step.cache));
  }
  return {std::move(h_seq), std::move(cache)};
}

// Exact reverse-mode pass through every timestep.
inline std::pair<LstmGrads, SeqTensor> lstm_backward(const SeqTensor& d_h,
                                                     const LstmCache& cache,
                                                     const LstmParams& p) {
  const std::size_t t_len = cache.steps.size();
  const std::size_t u = p.units;
  if (d_h.timesteps != t_len || d_h.channels != u) {
    throw ShapeError("lstm_backward: upstream " + shape_str(d_h.timesteps, d_h.channels) +
                     " does not match cache " + shape_str(t_len, u));
  }
  LstmGrads grads(p);
  SeqTensor dx(t_len, p.input_dim);
  std::vector<double> dh_carry(u, 0.0), dc_carry(u, 0.0);
  std::vector<double> dpre(4 * u);
  for (std::size_t ti = t_len; ti-- > 0;) {
    const LstmStepCache& s = cache.steps[ti];
    for (std::size_t k = 0; k < u; ++k) {
      const double dh = d_h.at(ti, k) + dh_carry[k];
      const double d_o = dh * s.tanh_c[k];
      const double dc = dc_carry[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
      const double d_i = dc * s.g[k];
      const double d_g = dc * s.i[k];
      const double d_f = dc * s.c_prev[k];
      dc_carry[k] = dc * s.f[k];
      dpre[k] = d_i * s.i[k] * (1.0 - s.i[k]);
      dpre[u + k] = d_f * s.f[k] * (1.0 - s.f[k]);
      dpre[2 * u + k] = d_g * (1.0 - s.g[k] * s.g[k]);
      dpre[3 * u + k] = d_o * s.o[k] * (1.0 - s.o[k]);
    }
    add_outer(grads.wx, dpre.data(), s.x.data());
    add_outer(grads.wh, dpre.data(), s.h_prev.data());
    for (std::size_t i = 0; i < 4 * u; ++i) grads.b[i] += dpre[i];
    matvec_t_acc(p.wx, dpre.data(), dx.frame(ti));
    std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
    matvec_t_acc(p.wh, dpre.data(), dh_carry.data());
  }
  return {std::move(grads), std::move(dx)};
}

// ---------------------------------------------------------------------------
// Bidirectional wrapper
// ---------------------------------------------------------------------------

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  BiLstmParams() = default;
  BiLstmParams(std::size_t d, std::size_t u) : forward(d, u), backward(d, u) {}

  static BiLstmParams init(std::size_t d, std::size_t u, Rng& rng) {
    BiLstmParams p;
    p.forward = LstmParams::init(d, u, rng);
    p.backward = LstmParams::init(d, u, rng);
    return p;
  }

  std::size_t units() const { return forward.units; }
  std::size_t input_dim() const { return forward.input_dim; }
};

// The backward direction runs on the time-reversed input; its cache is stored
// in that reversed frame.
struct BpttCache {
  LstmCache fwd;
  LstmCache bwd;
};

struct BiLstmGrads {
  LstmGrads forward;
  LstmGrads backward;

  explicit BiLstmGrads(const BiLstmParams& p) : forward(p.forward), backward(p.backward) {}
};

// H[t] = concat(forward h_t, backward h_t), backward scanning from T-1 to 0.
inline std::pair<SeqTensor, BpttCache> bilstm_forward(const SeqTensor& x,
                                                      const BiLstmParams& p) {
  const std::size_t u = p.units();
  auto [hf, cache_f] = lstm_forward(x, p.forward);
  auto [hb_rev, cache_b] = lstm_forward(reverse_time(x), p.backward);
  SeqTensor h(x.timesteps, 2 * u);
  for (std::size_t t = 0; t < x.timesteps; ++t) {
    std::copy(hf.frame(t), hf.frame(t) + u, h.frame(t));
    const double* hb = hb_rev.frame(x.timesteps - 1 - t);
    std::copy(hb, hb + u, h.frame(t) + u);
  }
  return {std::move(h), BpttCache{std::move(cache_f), std::move(cache_b)}};
}

inline std::pair<BiLstmGrads, SeqTensor> bilstm_backward(const SeqTensor& d_h,
                                                         const BpttCache& cache,
                                                         const BiLstmParams& p) {
  const std::size_t u = p.units();
  const std::size_t t_len = cache.fwd.steps.size();
  if (d_h.timesteps != t_len || d_h.channels != 2 * u) {
    throw ShapeError("bilstm_backward: upstream " + shape_str(d_h.timesteps, d_h.channels) +
                     " does not match cache " + shape_str(t_len, 2 * u));
  }
  SeqTensor d_hf(t_len, u), d_hb_rev(t_len, u);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t k = 0; k < u; ++k) {
      d_hf.at(t, k) = d_h.at(t, k);
      d_hb_rev.at(t_len - 1 - t, k) = d_h.at(t, u + k);
    }
  }
  auto [gf, dx_f] = lstm_backward(d_hf, cache.fwd, p.forward);
  auto [gb, dx_b_rev] = lstm_backward(d_hb_rev, cache.bwd, p.backward);
  SeqTensor dx_b = reverse_time(dx_b_rev);
  BiLstmGrads grads(p);
  grads.forward = std::move(gf);
  grads.backward = std::move(gb);
  SeqTensor dx = std::move(dx_f);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dx_b.data[i];
  return {std::move(grads), std::move(dx)};
}

}  // namespace tapnet
