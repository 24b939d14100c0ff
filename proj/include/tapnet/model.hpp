#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tapnet/attention.hpp"
#include "tapnet/data.hpp"
#include "tapnet/errors.hpp"
#include "tapnet/layers.hpp"
#include "tapnet/numerics.hpp"
#include "tapnet/recurrent.hpp"

namespace tapnet {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::size_t input_features = 57;
  std::size_t num_classes = 5;
  std::size_t conv_filters = 64;
  std::size_t kernel_size = 3;
  std::size_t pool_size = 2;
  std::size_t bilstm_units = 32;  // per direction, both stages
  std::size_t attention_width = 64;
  AttentionMode attention_mode = AttentionMode::final_state;
  std::size_t dense_units = 250;
  double dropout_rate = 0.2;
  std::uint64_t seed = 42;

  std::size_t conv_timesteps() const { return input_features - kernel_size + 1; }
  std::size_t pooled_timesteps() const { return conv_timesteps() / pool_size; }
  std::size_t state_width() const { return 2 * bilstm_units; }
  std::size_t context_timesteps() const {
    return attention_mode == AttentionMode::final_state ? 1 : pooled_timesteps();
  }
  std::size_t combined_width() const {
    return conv_timesteps() * conv_filters + context_timesteps() * state_width();
  }

  void validate() const {
    if (input_features == 0 || num_classes == 0 || conv_filters == 0 ||
        kernel_size == 0 || pool_size == 0 || bilstm_units == 0 ||
        attention_width == 0 || dense_units == 0) {
      throw ParameterError("model config: all counts must be >= 1");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
      throw ParameterError("model config: dropout_rate must be in [0, 1)");
    }
    if (input_features < kernel_size) {
      throw ParameterError("model config: input_features (" +
                           std::to_string(input_features) + ") must be >= kernel_size (" +
                           std::to_string(kernel_size) + ")");
    }
    if (pooled_timesteps() == 0) {
      throw ParameterError("model config: pooling leaves no timesteps");
    }
  }
};

struct ModelParams {
  Conv1DParams conv;
  BiLstmParams bilstm1;
  AttentionParams attn;
  BiLstmParams bilstm2;
  Mat dense_hidden_w;
  std::vector<double> dense_hidden_b;
  Mat dense_out_w;
  std::vector<double> dense_out_b;
};

// Gradients mirror the parameter layout exactly.
using Gradients = ModelParams;

struct ParamRef {
  const char* name;
  std::vector<double>* values;
};

struct ConstParamRef {
  const char* name;
  const std::vector<double>* values;
};

// Canonical parameter order. Checkpoint serialization, the Adam update and
// the gradient checker all iterate this list.
inline std::vector<ParamRef> param_refs(ModelParams& p) {
  return {
      {"conv.weights", &p.conv.weights},
      {"conv.bias", &p.conv.bias},
      {"bilstm1.fwd.wx", &p.bilstm1.forward.wx.data},
      {"bilstm1.fwd.wh", &p.bilstm1.forward.wh.data},
      {"bilstm1.fwd.b", &p.bilstm1.forward.b},
      {"bilstm1.bwd.wx", &p.bilstm1.backward.wx.data},
      {"bilstm1.bwd.wh", &p.bilstm1.backward.wh.data},
      {"bilstm1.bwd.b", &p.bilstm1.backward.b},
      {"attention.w1", &p.attn.w1.data},
      {"attention.w2", &p.attn.w2.data},
      {"attention.v", &p.attn.v.data},
      {"bilstm2.fwd.wx", &p.bilstm2.forward.wx.data},
      {"bilstm2.fwd.wh", &p.bilstm2.forward.wh.data},
      {"bilstm2.fwd.b", &p.bilstm2.forward.b},
      {"bilstm2.bwd.wx", &p.bilstm2.backward.wx.data},
      {"bilstm2.bwd.wh", &p.bilstm2.backward.wh.data},
      {"bilstm2.bwd.b", &p.bilstm2.backward.b},
      {"dense_hidden.w", &p.dense_hidden_w.data},
      {"dense_hidden.b", &p.dense_hidden_b},
      {"dense_out.w", &p.dense_out_w.data},
      {"dense_out.b", &p.dense_out_b},
  };
}

inline std::vector<ConstParamRef> param_refs(const ModelParams& p) {
  auto refs = param_refs(const_cast<ModelParams&>(p));
  std::vector<ConstParamRef> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back({r.name, r.values});
  return out;
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& ref : param_refs(z)) {
    std::fill(ref.values->begin(), ref.values->end(), 0.0);
  }
  return z;
}

inline std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& ref : param_refs(p)) n += ref.values->size();
  return n;
}

// Glorot weights, zero biases, LSTM forget-gate bias +1; draw order follows
// the canonical parameter order, so a seed pins every array.
inline ModelParams build(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams p;
  p.conv = Conv1DParams::init(cfg.kernel_size, 1, cfg.conv_filters, rng);
  p.bilstm1 = BiLstmParams::init(cfg.conv_filters, cfg.bilstm_units, rng);
  p.attn = AttentionParams::init(cfg.attention_width, cfg.state_width(), rng);
  p.bilstm2 = BiLstmParams::init(cfg.state_width(), cfg.bilstm_units, rng);
  p.dense_hidden_w = glorot_uniform(cfg.dense_units, cfg.combined_width(), rng);
  p.dense_hidden_b.assign(cfg.dense_units, 0.0);
  p.dense_out_w = glorot_uniform(cfg.num_classes, cfg.dense_units, rng);
  p.dense_out_b.assign(cfg.num_classes, 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// Forward / loss / backward
// ---------------------------------------------------------------------------

struct SampleCache {
  Conv1DCache conv;
  PoolCache pool;
  BpttCache bilstm1;
  DropoutMask drop1;
  AttentionCache attn;
  BpttCache bilstm2;
  DenseCache dense_hidden;
  DropoutMask drop2;
  DenseCache dense_out;
};

struct ForwardCache {
  std::vector<SampleCache> samples;
  bool training = false;
};

// Pipeline: reshape -> conv+ReLU -> maxpool -> bilstm1 (+output dropout) ->
// attention -> bilstm2 -> concat(flatten(conv out), flatten(bilstm2 out)) ->
// dense ReLU -> dropout -> dense -> softmax.
inline std::pair<Mat, ForwardCache> forward(const ModelParams& params,
                                            const ModelConfig& cfg, const Mat& batch,
                                            bool training, Rng* rng = nullptr) {
  if (batch.cols != cfg.input_features) {
    throw ShapeError("forward: batch width " + std::to_string(batch.cols) +
                     " does not match input_features " + std::to_string(cfg.input_features));
  }
  const bool use_dropout = training && cfg.dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) {
    throw ParameterError("forward: training-mode dropout requires an RNG");
  }
  Mat probs(batch.rows, cfg.num_classes);
  ForwardCache cache;
  cache.training = training;
  cache.samples.resize(batch.rows);

  for (std::size_t n = 0; n < batch.rows; ++n) {
    SampleCache& sc = cache.samples[n];
    SeqTensor x(cfg.input_features, 1);
    std::copy(batch.row(n), batch.row(n) + batch.cols, x.data.begin());

    auto [conv_out, conv_cache] = conv1d_forward(x, params.conv);
    sc.conv = std::move(conv_cache);
    auto [pooled, pool_cache] = maxpool1d_forward(conv_out, cfg.pool_size);
    sc.pool = std::move(pool_cache);
    auto [h1, b1_cache] = bilstm_forward(pooled, params.bilstm1);
    sc.bilstm1 = std::move(b1_cache);

    SeqTensor h1d = h1;
    if (use_dropout) {
      auto [dropped, mask] = dropout_forward(h1.data, cfg.dropout_rate, true, *rng);
      h1d.data = std::move(dropped);
      sc.drop1 = std::move(mask);
    }

    auto [attn_out, attn_cache] = attention_forward(h1d, cfg.attention_mode, params.attn);
    sc.attn = std::move(attn_cache);
    SeqTensor ctx(attn_out.contexts.rows, attn_out.contexts.cols);
    ctx.data = std::move(attn_out.contexts.data);
    auto [h2, b2_cache] = bilstm_forward(ctx, params.bilstm2);
    sc.bilstm2 = std::move(b2_cache);

    std::vector<double> combined;
    combined.reserve(conv_out.data.size() + h2.data.size());
    combined.insert(combined.end(), conv_out.data.begin(), conv_out.data.end());
    combined.insert(combined.end(), h2.data.begin(), h2.data.end());

    auto [hidden, hid_cache] = dense_forward(combined, params.dense_hidden_w,
                                             params.dense_hidden_b, Activation::relu);
    sc.dense_hidden = std::move(hid_cache);
    std::vector<double> hidden_d = hidden;
    if (use_dropout) {
      auto [dropped, mask] = dropout_forward(hidden, cfg.dropout_rate, true, *rng);
      hidden_d = std::move(dropped);
      sc.drop2 = std::move(mask);
    }
    auto [logits, out_cache] = dense_forward(hidden_d, params.dense_out_w,
                                             params.dense_out_b, Activation::identity);
    sc.dense_out = std::move(out_cache);
    std::vector<double> p = stable_softmax(logits);
    std::copy(p.begin(), p.end(), probs.row(n));
  }
  return {std::move(probs), std::move(cache)};
}

// Mean of -log p[label] with p clamped at 1e-12; the returned gradient is
// w.r.t. the logits: (probs - onehot) / batch.
inline std::pair<double, Mat> sparse_categorical_crossentropy(
    const Mat& probs, const std::vector<int>& labels) {
  if (labels.size() != probs.rows) {
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(probs.rows) + " probability rows");
  }
  if (probs.rows == 0) throw DataError("loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(probs.rows);
  Mat d_logits(probs.rows, probs.cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < probs.rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= probs.cols) {
      throw DataError("loss: label " + std::to_string(label) + " out of range at row " +
                      std::to_string(r));
    }
    loss -= std::log(std::max(probs(r, static_cast<std::size_t>(label)), 1e-12));
    for (std::size_t j = 0; j < probs.cols; ++j) {
      const double onehot = (static_cast<std::size_t>(label) == j) ? 1.0 : 0.0;
      d_logits(r, j) = (probs(r, j) - onehot) * inv_n;
    }
  }
  return {loss * inv_n, std::move(d_logits)};
}

namespace detail {

inline void acc(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

inline void acc(Mat& dst, const Mat& src) { acc(dst.data, src.data); }

inline void acc_lstm(LstmParams& dst, const LstmGrads& src) {
  acc(dst.wx, src.wx);
  acc(dst.wh, src.wh);
  acc(dst.b, src.b);
}

inline void acc_bilstm(BiLstmParams& dst, const BiLstmGrads& src) {
  acc_lstm(dst.forward, src.forward);
  acc_lstm(dst.backward, src.backward);
}

}  // namespace detail

inline Gradients backward(const ModelParams& params, const ModelConfig& cfg,
                          const ForwardCache& cache, const Mat& d_logits) {
  if (!cache.training) {
    throw ParameterError("backward: cache must come from a training-mode forward");
  }
  if (d_logits.rows != cache.samples.size() || d_logits.cols != cfg.num_classes) {
    throw ShapeError("backward: upstream " + shape_str(d_logits.rows, d_logits.cols) +
                     " does not match cached batch of " +
                     std::to_string(cache.samples.size()));
  }
  Gradients g = zeros_like(params);
  const std::size_t conv_t = cfg.conv_timesteps();
  const std::size_t conv_flat = conv_t * cfg.conv_filters;
  const std::size_t ctx_t = cfg.context_timesteps();
  const std::size_t sw = cfg.state_width();

  for (std::size_t n = 0; n < cache.samples.size(); ++n) {
    const SampleCache& sc = cache.samples[n];
    std::vector<double> dlog(d_logits.row(n), d_logits.row(n) + d_logits.cols);

    auto [g_out, d_hidden_d] = dense_backward(dlog, sc.dense_out, params.dense_out_w);
    detail::acc(g.dense_out_w, g_out.w);
    detail::acc(g.dense_out_b, g_out.b);

    std::vector<double> d_hidden = dropout_backward(d_hidden_d, sc.drop2);
    auto [g_hid, d_combined] = dense_backward(d_hidden, sc.dense_hidden,
                                              params.dense_hidden_w);
    detail::acc(g.dense_hidden_w, g_hid.w);
    detail::acc(g.dense_hidden_b, g_hid.b);

    // The combined vector feeds from two branches; split its gradient.
    SeqTensor d_conv_out(conv_t, cfg.conv_filters);
    std::copy(d_combined.begin(), d_combined.begin() + conv_flat, d_conv_out.data.begin());
    SeqTensor d_h2(ctx_t, sw);
    std::copy(d_combined.begin() + conv_flat, d_combined.end(), d_h2.data.begin());

    auto [g_b2, d_ctx] = bilstm_backward(d_h2, sc.bilstm2, params.bilstm2);
    detail::acc_bilstm(g.bilstm2, g_b2);

    Mat d_contexts(ctx_t, sw);
    d_contexts.data = std::move(d_ctx.data);
    AttentionBackwardOut ab = attention_backward(d_contexts, sc.attn, params.attn);
    detail::acc(g.attn.w1, ab.grads.w1);
    detail::acc(g.attn.w2, ab.grads.w2);
    detail::acc(g.attn.v, ab.grads.v);

    SeqTensor d_h1d = std::move(ab.d_h);
    // Queries alias rows of the bilstm1 output; fold their gradient back in.
    if (cfg.attention_mode == AttentionMode::final_state) {
      double* last = d_h1d.frame(d_h1d.timesteps - 1);
      const double* dq = ab.d_queries.row(0);
      for (std::size_t d = 0; d < sw; ++d) last[d] += dq[d];
    } else {
      for (std::size_t j = 0; j < d_h1d.timesteps; ++j) {
        double* frame = d_h1d.frame(j);
        const double* dq = ab.d_queries.row(j);
        for (std::size_t d = 0; d < sw; ++d) frame[d] += dq[d];
      }
    }

    SeqTensor d_h1(d_h1d.timesteps, d_h1d.channels);
    d_h1.data = dropout_backward(d_h1d.data, sc.drop1);
    auto [g_b1, d_pooled] = bilstm_backward(d_h1, sc.bilstm1, params.bilstm1);
    detail::acc_bilstm(g.bilstm1, g_b1);

    SeqTensor d_conv_pool = maxpool1d_backward(d_pooled, sc.pool);
    for (std::size_t i = 0; i < d_conv_out.data.size(); ++i) {
      d_conv_out.data[i] += d_conv_pool.data[i];
    }
    auto [g_conv, d_x] = conv1d_backward(d_conv_out, sc.conv, params.conv);
    detail::acc(g.conv.weights, g_conv.weights);
    detail::acc(g.conv.bias, g_conv.bias);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;

  AdamState(const ModelParams& params, double lr)
      : m(zeros_like(params)), v(zeros_like(params)), learning_rate(lr) {}
};

inline void adam_step(ModelParams& params, const Gradients& grads, AdamState& st) {
  auto pr = param_refs(params);
  auto gr = param_refs(grads);
  auto mr = param_refs(st.m);
  auto vr = param_refs(st.v);
  for (std::size_t g = 0; g < pr.size(); ++g) {
    if (gr[g].values->size() != pr[g].values->size()) {
      throw ShapeError(std::string("adam_step: gradient group ") + pr[g].name +
                       " does not match parameter shape");
    }
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t g = 0; g < pr.size(); ++g) {
    std::vector<double>& p = *pr[g].values;
    const std::vector<double>& gv = *gr[g].values;
    std::vector<double>& m = *mr[g].values;
    std::vector<double>& v = *vr[g].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gv[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gv[i] * gv[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= st.learning_rate * m_hat / (std::sqrt(v_hat) + st.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// Ties break toward the lower class id.
inline int argmax_class(const double* p, std::size_t n) {
  int best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (p[i] > p[best]) best = static_cast<int>(i);
  }
  return best;
}

inline int argmax_class(const std::vector<double>& p) {
  if (p.empty()) throw ShapeError("argmax_class: empty vector");
  return argmax_class(p.data(), p.size());
}

inline std::pair<std::vector<int>, Mat> predict_batch(const ModelParams& params,
                                                      const ModelConfig& cfg,
                                                      const Mat& features) {
  auto [probs, cache] = forward(params, cfg, features, /*training=*/false);
  std::vector<int> classes(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) {
    classes[r] = argmax_class(probs.row(r), probs.cols);
  }
  return {std::move(classes), std::move(probs)};
}

inline std::pair<int, std::vector<double>> predict(const ModelParams& params,
                                                   const ModelConfig& cfg,
                                                   const std::vector<double>& features) {
  Mat batch(1, features.size());
  batch.data = features;
  auto [classes, probs] = predict_batch(params, cfg, batch);
  return {classes[0], std::vector<double>(probs.row(0), probs.row(0) + probs.cols)};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs == 0) throw ParameterError("train config: epochs must be >= 1");
    if (batch_size == 0) throw ParameterError("train config: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ParameterError("train config: learning_rate must be > 0");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
      throw ParameterError("train config: validation_fraction must be in [0, 1)");
    }
  }
};

struct EpochStats {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

namespace detail {

inline std::pair<double, double> eval_loss_acc(const ModelParams& params,
                                               const ModelConfig& cfg,
                                               const Mat& features,
                                               const std::vector<int>& labels) {
  auto [probs, cache] = forward(params, cfg, features, /*training=*/false);
  auto [loss, d] = sparse_categorical_crossentropy(probs, labels);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < probs.rows; ++r) {
    if (argmax_class(probs.row(r), probs.cols) == labels[r]) ++correct;
  }
  return {loss, static_cast<double>(correct) / static_cast<double>(probs.rows)};
}

}  // namespace detail

// Mini-batch Adam with per-epoch seeded shuffling. When validation_fraction
// is zero the validation columns mirror the training metrics.
inline std::pair<ModelParams, TrainHistory> train(const Dataset& dataset,
                                                  const ModelConfig& mcfg,
                                                  const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  if (dataset.n() == 0) throw DataError("train: empty dataset");
  if (!dataset.has_labels) throw DataError("train: dataset has no labels");
  if (dataset.width() != mcfg.input_features) {
    throw ShapeError("train: dataset width " + std::to_string(dataset.width()) +
                     " does not match input_features " + std::to_string(mcfg.input_features));
  }
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    if (dataset.labels[i] < 0 ||
        static_cast<std::size_t>(dataset.labels[i]) >= mcfg.num_classes) {
      throw DataError("train: label " + std::to_string(dataset.labels[i]) +
                      " out of range at row " + std::to_string(i));
    }
  }

  Dataset tr = dataset;
  Dataset val;
  const bool has_val = tcfg.validation_fraction > 0.0;
  if (has_val) {
    auto split = stratified_split(dataset, tcfg.validation_fraction, tcfg.seed);
    tr = std::move(split.first);
    val = std::move(split.second);
  }

  ModelParams params = build(mcfg);
  AdamState state(params, tcfg.learning_rate);
  Rng rng(tcfg.seed);
  TrainHistory history;
  history.epochs.reserve(tcfg.epochs);

  std::vector<std::size_t> order(tr.n());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t bn = std::min(tcfg.batch_size, order.size() - start);
      Mat batch(bn, tr.width());
      std::vector<int> labels(bn);
      for (std::size_t i = 0; i < bn; ++i) {
        const std::size_t src = order[start + i];
        std::copy(tr.features.row(src), tr.features.row(src) + tr.width(), batch.row(i));
        labels[i] = tr.labels[src];
      }
      auto [probs, cache] = forward(params, mcfg, batch, /*training=*/true, &rng);
      auto [loss, d_logits] = sparse_categorical_crossentropy(probs, labels);
      Gradients grads = backward(params, mcfg, cache, d_logits);
      adam_step(params, grads, state);
      loss_sum += loss * static_cast<double>(bn);
      for (std::size_t i = 0; i < bn; ++i) {
        if (argmax_class(probs.row(i), probs.cols) == labels[i]) ++correct;
      }
    }
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(tr.n());
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(tr.n());
    if (has_val) {
      auto [vl, va] = detail::eval_loss_acc(params, mcfg, val.features, val.labels);
      stats.val_loss = vl;
      stats.val_acc = va;
    } else {
      stats.val_loss = stats.train_loss;
      stats.val_acc = stats.train_acc;
    }
    history.epochs.push_back(stats);
  }
  return {std::move(params), std::move(history)};
}

// ---------------------------------------------------------------------------
// Whole-model gradient checker
// ---------------------------------------------------------------------------

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double worst = 0.0;
  double epsilon = 0.0;

  bool pass(double tolerance = 1e-4) const { return worst <= tolerance; }
};

// Central finite differences against the analytic gradients, dropout
// disabled. Errors are |analytic - fd| / max(1, |fd|) per entry.
// `fault_scale` multiplies the analytic conv kernel gradient so the harness
// itself can be shown to catch a broken gradient.
inline GradCheckReport gradient_check(const ModelConfig& cfg_in, const Mat& features,
                                      const std::vector<int>& labels,
                                      double epsilon = 1e-5, double fault_scale = 1.0) {
  ModelConfig cfg = cfg_in;
  cfg.dropout_rate = 0.0;
  ModelParams params = build(cfg);

  auto loss_at = [&]() {
    auto [probs, cache] = forward(params, cfg, features, /*training=*/true);
    return sparse_categorical_crossentropy(probs, labels).first;
  };

  auto [probs, cache] = forward(params, cfg, features, /*training=*/true);
  auto [loss, d_logits] = sparse_categorical_crossentropy(probs, labels);
  Gradients analytic = backward(params, cfg, cache, d_logits);
  if (fault_scale != 1.0) {
    for (double& w : analytic.conv.weights) w *= fault_scale;
  }

  GradCheckReport report;
  report.epsilon = epsilon;
  auto p_refs = param_refs(params);
  auto a_refs = param_refs(analytic);
  for (std::size_t g = 0; g < p_refs.size(); ++g) {
    GradCheckGroup group{p_refs[g].name, 0.0};
    std::vector<double>& vals = *p_refs[g].values;
    const std::vector<double>& an = *a_refs[g].values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + epsilon;
      const double up = loss_at();
      vals[i] = orig - epsilon;
      const double down = loss_at();
      vals[i] = orig;
      const double fd = (up - down) / (2.0 * epsilon);
      const double err = std::abs(an[i] - fd) / std::max(1.0, std::abs(fd));
      group.max_rel_err = std::max(group.max_rel_err, err);
    }
    report.worst = std::max(report.worst, group.max_rel_err);
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace tapnet
