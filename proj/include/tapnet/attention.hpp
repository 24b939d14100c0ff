#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tapnet/errors.hpp"
#include "tapnet/layers.hpp"
#include "tapnet/numerics.hpp"

namespace tapnet {

// Additive attention: score(i,j) = V . tanh(W1 h_i + W2 q_j).
struct AttentionParams {
  Mat w1;  // A x H
  Mat w2;  // A x H
  Mat v;   // 1 x A

  AttentionParams() = default;
  AttentionParams(std::size_t a, std::size_t h) : w1(a, h), w2(a, h), v(1, a) {}

  static AttentionParams init(std::size_t a, std::size_t h, Rng& rng) {
    AttentionParams p;
    p.w1 = glorot_uniform(a, h, rng);
    p.w2 = glorot_uniform(a, h, rng);
    p.v = glorot_uniform(1, a, rng);
    return p;
  }

  std::size_t width() const { return w1.rows; }
  std::size_t state_width() const { return w1.cols; }
};

// `final_state` scores every timestep against the last hidden state and emits
// one context vector; `all_positions` treats every timestep as a query and
// emits one context per timestep.
enum class AttentionMode { final_state, all_positions };

inline std::string to_string(AttentionMode m) {
  return m == AttentionMode::final_state ? "final" : "all";
}

inline AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "final") return AttentionMode::final_state;
  if (s == "all") return AttentionMode::all_positions;
  throw ParameterError("attention mode must be 'final' or 'all', got '" + s + "'");
}

struct AttentionCache {
  SeqTensor h;            // keys/values, T x H
  Mat queries;            // Q x H
  Mat alpha;              // T x Q, each column sums to 1
  std::vector<double> tanh_z;  // [i][j][a] = tanh(W1 h_i + W2 q_j), T*Q*A
  AttentionMode mode = AttentionMode::final_state;
};

struct AttentionOutput {
  Mat weights;   // Q x T, each row sums to 1
  Mat contexts;  // Q x H
};

struct AttentionGrads {
  Mat w1;
  Mat w2;
  Mat v;

  explicit AttentionGrads(const AttentionParams& p)
      : w1(p.w1.rows, p.w1.cols), w2(p.w2.rows, p.w2.cols), v(p.v.rows, p.v.cols) {}
};

// Score matrix, one scalar per (timestep i, query j). When `cache` is given
// the tanh intermediates are retained for the backward pass.
inline Mat attention_scores(const SeqTensor& h, const Mat& queries,
                            const AttentionParams& p, AttentionCache* cache = nullptr) {
  const std::size_t a = p.width();
  if (h.channels != p.w1.cols) {
    throw ShapeError("attention_scores: state width " + std::to_string(h.channels) +
                     " does not match W1 " + shape_str(p.w1.rows, p.w1.cols));
  }
  if (queries.cols != p.w2.cols) {
    throw ShapeError("attention_scores: query width " + std::to_string(queries.cols) +
                     " does not match W2 " + shape_str(p.w2.rows, p.w2.cols));
  }
  const std::size_t t_len = h.timesteps;
  const std::size_t q_len = queries.rows;

  // Precompute W1 h_i and W2 q_j once per row.
  Mat w1h(t_len, a), w2q(q_len, a);
  for (std::size_t i = 0; i < t_len; ++i) matvec(p.w1, h.frame(i), w1h.row(i));
  for (std::size_t j = 0; j < q_len; ++j) matvec(p.w2, queries.row(j), w2q.row(j));

  Mat scores(t_len, q_len);
  if (cache) cache->tanh_z.assign(t_len * q_len * a, 0.0);
  std::vector<double> u(a);
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t j = 0; j < q_len; ++j) {
      const double* hi = w1h.row(i);
      const double* qj = w2q.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a; ++k) {
        u[k] = std::tanh(hi[k] + qj[k]);
        s += p.v(0, k) * u[k];
      }
      scores(i, j) = s;
      if (cache) {
        std::copy(u.begin(), u.end(), cache->tanh_z.data() + (i * q_len + j) * a);
      }
    }
  }
  return scores;
}

// Column-wise (per-query) softmax over timesteps.
inline Mat attention_weights(const Mat& scores) {
  if (scores.rows == 0 || scores.cols == 0) {
    throw ShapeError("attention_weights: empty score matrix");
  }
  Mat alpha(scores.rows, scores.cols);
  std::vector<double> col(scores.rows);
  for (std::size_t j = 0; j < scores.cols; ++j) {
    for (std::size_t i = 0; i < scores.rows; ++i) col[i] = scores(i, j);
    softmax_inplace(col.data(), col.size());
    for (std::size_t i = 0; i < scores.rows; ++i) alpha(i, j) = col[i];
  }
  return alpha;
}

// c_j = sum_i alpha(i,j) h_i.
inline Mat context_vectors(const Mat& alpha, const SeqTensor& h) {
  if (alpha.rows != h.timesteps) {
    throw ShapeError("context_vectors: weights " + shape_str(alpha.rows, alpha.cols) +
                     " do not match states with " + std::to_string(h.timesteps) +
                     " timesteps");
  }
  Mat contexts(alpha.cols, h.channels, 0.0);
  for (std::size_t i = 0; i < h.timesteps; ++i) {
    const double* hi = h.frame(i);
    for (std::size_t j = 0; j < alpha.cols; ++j) {
      const double w = alpha(i, j);
      double* cj = contexts.row(j);
      for (std::size_t d = 0; d < h.channels; ++d) cj[d] += w * hi[d];
    }
  }
  return contexts;
}

inline std::pair<AttentionOutput, AttentionCache> attention_forward(
    const SeqTensor& h, AttentionMode mode, const AttentionParams& p) {
  if (h.timesteps == 0) throw ShapeError("attention_forward: empty sequence");
  AttentionCache cache;
  cache.h = h;
  cache.mode = mode;
  if (mode == AttentionMode::final_state) {
    cache.queries = Mat(1, h.channels);
    std::copy(h.frame(h.timesteps - 1), h.frame(h.timesteps - 1) + h.channels,
              cache.queries.row(0));
  } else {
    cache.queries = Mat(h.timesteps, h.channels);
    std::copy(h.data.begin(), h.data.end(), cache.queries.data.begin());
  }
  Mat scores = attention_scores(h, cache.queries, p, &cache);
  cache.alpha = attention_weights(scores);
  Mat contexts = context_vectors(cache.alpha, h);
  AttentionOutput out;
  out.contexts = std::move(contexts);
  out.weights = Mat(cache.alpha.cols, cache.alpha.rows);
  for (std::size_t i = 0; i < cache.alpha.rows; ++i)
    for (std::size_t j = 0; j < cache.alpha.cols; ++j)
      out.weights(j, i) = cache.alpha(i, j);
  return {std::move(out), std::move(cache)};
}

// ds_i = alpha_i * (dalpha_i - sum_k alpha_k dalpha_k): the softmax Jacobian
// diag(alpha) - alpha alpha^T applied to dalpha.
inline std::vector<double> softmax_backward_column(const std::vector<double>& alpha,
                                                   const std::vector<double>& dalpha) {
  if (alpha.size() != dalpha.size()) {
    throw ShapeError("softmax_backward_column: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] * dalpha[i];
  std::vector<double> ds(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) ds[i] = alpha[i] * (dalpha[i] - s);
  return ds;
}

struct AttentionBackwardOut {
  AttentionGrads grads;
  SeqTensor d_h;
  Mat d_queries;

  explicit AttentionBackwardOut(const AttentionParams& p) : grads(p) {}
};

// Exact gradients through the weighted sum, the per-query softmax, the tanh,
// and the three weight matrices. dQueries is reported separately; when the
// queries alias rows of H the caller folds it back in.
inline AttentionBackwardOut attention_backward(const Mat& d_contexts,
                                               const AttentionCache& cache,
                                               const AttentionParams& p) {
  const std::size_t t_len = cache.h.timesteps;
  const std::size_t q_len = cache.queries.rows;
  const std::size_t a = p.width();
  const std::size_t hw = cache.h.channels;
  if (d_contexts.rows != q_len || d_contexts.cols != hw) {
    throw ShapeError("attention_backward: upstream " +
                     shape_str(d_contexts.rows, d_contexts.cols) + " does not match contexts " +
                     shape_str(q_len, hw));
  }
  if (cache.tanh_z.size() != t_len * q_len * a) {
    throw ShapeError("attention_backward: cache does not match params");
  }

  AttentionBackwardOut out(p);
  out.d_h = SeqTensor(t_len, hw);
  out.d_queries = Mat(q_len, hw);

  // Through the weighted sum: dalpha(i,j) and the direct dH contribution.
  Mat dalpha(t_len, q_len);
  for (std::size_t j = 0; j < q_len; ++j) {
    const double* dc = d_contexts.row(j);
    for (std::size_t i = 0; i < t_len; ++i) {
      const double* hi = cache.h.frame(i);
      dalpha(i, j) = dot(dc, hi, hw);
      const double w = cache.alpha(i, j);
      double* dhi = out.d_h.frame(i);
      for (std::size_t d = 0; d < hw; ++d) dhi[d] += w * dc[d];
    }
  }

  // Through the softmax, one column per query.
  Mat dscores(t_len, q_len);
  std::vector<double> acol(t_len), dcol(t_len);
  for (std::size_t j = 0; j < q_len; ++j) {
    for (std::size_t i = 0; i < t_len; ++i) {
      acol[i] = cache.alpha(i, j);
      dcol[i] = dalpha(i, j);
    }
    std::vector<double> ds = softmax_backward_column(acol, dcol);
    for (std::size_t i = 0; i < t_len; ++i) dscores(i, j) = ds[i];
  }

  // Through score = V . tanh(W1 h_i + W2 q_j).
  std::vector<double> dz(a);
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t j = 0; j < q_len; ++j) {
      const double dsij = dscores(i, j);
      if (dsij == 0.0) continue;
      const double* u = cache.tanh_z.data() + (i * q_len + j) * a;
      for (std::size_t k = 0; k < a; ++k) {
        out.grads.v(0, k) += dsij * u[k];
        dz[k] = dsij * p.v(0, k) * (1.0 - u[k] * u[k]);
      }
      add_outer(out.grads.w1, dz.data(), cache.h.frame(i));
      add_outer(out.grads.w2, dz.data(), cache.queries.row(j));
      matvec_t_acc(p.w1, dz.data(), out.d_h.frame(i));
      matvec_t_acc(p.w2, dz.data(), out.d_queries.row(j));
    }
  }
  return out;
}

}  // namespace tapnet
