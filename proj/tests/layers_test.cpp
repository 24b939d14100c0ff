#include "tapnet/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace tapnet;

namespace {

SeqTensor random_seq(std::size_t t, std::size_t c, Rng& rng, double scale = 1.0) {
  SeqTensor x(t, c);
  for (double& v : x.data) v = scale * rng.normal();
  return x;
}

// Sliding-window dot product, the conv oracle (ReLU applied like the layer).
SeqTensor conv_reference(const SeqTensor& x, const Conv1DParams& p) {
  const std::size_t out_t = x.timesteps - p.kernel + 1;
  SeqTensor out(out_t, p.filters);
  for (std::size_t t = 0; t < out_t; ++t) {
    for (std::size_t f = 0; f < p.filters; ++f) {
      double acc = p.bias[f];
      for (std::size_t k = 0; k < p.kernel; ++k)
        for (std::size_t c = 0; c < p.in_channels; ++c)
          acc += x.at(t + k, c) * p.w(k, c, f);
      out.at(t, f) = std::max(acc, 0.0);
    }
  }
  return out;
}

}  // namespace

TEST(Conv1D, OutputLengthIs55For57) {
  Rng rng(1);
  SeqTensor x = random_seq(57, 1, rng);
  Conv1DParams p = Conv1DParams::init(3, 1, 64, rng);
  auto [out, cache] = conv1d_forward(x, p);
  EXPECT_EQ(out.timesteps, 55u);
  EXPECT_EQ(out.channels, 64u);
}

TEST(Conv1D, IdentityKernelPassesThrough) {
  Conv1DParams p(3, 1, 1);
  p.w(1, 0, 0) = 1.0;  // kernel [0, 1, 0]
  SeqTensor x(6, 1);
  for (std::size_t t = 0; t < 6; ++t) x.at(t, 0) = static_cast<double>(t) + 1.0;
  auto [out, cache] = conv1d_forward(x, p);
  ASSERT_EQ(out.timesteps, 4u);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(out.at(t, 0), x.at(t + 1, 0));
}

TEST(Conv1D, MatchesSlidingWindowOracle) {
  Rng rng(9);
  SeqTensor x = random_seq(8, 1, rng);
  Conv1DParams p = Conv1DParams::init(3, 1, 2, rng);
  for (double& b : p.bias) b = rng.normal();
  auto [out, cache] = conv1d_forward(x, p);
  SeqTensor want = conv_reference(x, p);
  ASSERT_EQ(out.data.size(), want.data.size());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    EXPECT_NEAR(out.data[i], want.data[i], 1e-12);
  }
}

TEST(Conv1D, TooShortSequenceThrows) {
  Rng rng(2);
  Conv1DParams p = Conv1DParams::init(3, 1, 2, rng);
  SeqTensor x(2, 1, 1.0);
  EXPECT_THROW(conv1d_forward(x, p), ShapeError);
}

TEST(Conv1D, ZeroUpstreamGivesZeroGradients) {
  Rng rng(3);
  SeqTensor x = random_seq(7, 2, rng);
  Conv1DParams p = Conv1DParams::init(3, 2, 3, rng);
  auto [out, cache] = conv1d_forward(x, p);
  SeqTensor d_out(out.timesteps, out.channels);
  auto [grads, dx] = conv1d_backward(d_out, cache, p);
  for (double v : grads.weights) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : grads.bias) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : dx.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Conv1D, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  SeqTensor x = random_seq(8, 2, rng);
  Conv1DParams p = Conv1DParams::init(3, 2, 2, rng);
  // Weighted-sum head so the scalar loss exercises every output.
  const std::vector<double> w = testutil::random_vector(6 * 2, rng);

  auto loss = [&]() {
    auto [out, cache] = conv1d_forward(x, p);
    return dot(out.data.data(), w.data(), w.size());
  };
  auto [out, cache] = conv1d_forward(x, p);
  SeqTensor d_out(out.timesteps, out.channels);
  d_out.data = w;
  auto [grads, dx] = conv1d_backward(d_out, cache, p);

  EXPECT_LE(testutil::max_rel_err(grads.weights, testutil::fd_gradient(p.weights, loss)),
            1e-4);
  EXPECT_LE(testutil::max_rel_err(grads.bias, testutil::fd_gradient(p.bias, loss)), 1e-4);
  EXPECT_LE(testutil::max_rel_err(dx.data, testutil::fd_gradient(x.data, loss)), 1e-4);
}

TEST(MaxPool, FloorsOddLength) {
  Rng rng(1);
  SeqTensor x = random_seq(55, 3, rng);
  auto [out, cache] = maxpool1d_forward(x, 2);
  EXPECT_EQ(out.timesteps, 27u);
  EXPECT_EQ(out.channels, 3u);
}

TEST(MaxPool, HandChecked) {
  SeqTensor x(4, 1);
  x.at(0, 0) = 1;
  x.at(1, 0) = 3;
  x.at(2, 0) = 2;
  x.at(3, 0) = 0;
  auto [out, cache] = maxpool1d_forward(x, 2);
  ASSERT_EQ(out.timesteps, 2u);
  EXPECT_DOUBLE_EQ(out.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out.at(1, 0), 2.0);
}

TEST(MaxPool, PoolZeroThrows) {
  SeqTensor x(4, 1, 1.0);
  EXPECT_THROW(maxpool1d_forward(x, 0), ParameterError);
}

TEST(MaxPool, BackwardRoutesToArgmaxOnly) {
  Rng rng(21);
  SeqTensor x = random_seq(9, 2, rng);
  const std::vector<double> w = testutil::random_vector(4 * 2, rng);
  auto loss = [&]() {
    auto [out, cache] = maxpool1d_forward(x, 2);
    return dot(out.data.data(), w.data(), w.size());
  };
  auto [out, cache] = maxpool1d_forward(x, 2);
  SeqTensor d_out(out.timesteps, out.channels);
  d_out.data = w;
  SeqTensor dx = maxpool1d_backward(d_out, cache);
  EXPECT_LE(testutil::max_rel_err(dx.data, testutil::fd_gradient(x.data, loss)), 1e-4);
  // Only argmax positions carry gradient.
  std::size_t nonzero = 0;
  for (double v : dx.data) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 4u * 2u);
}

TEST(Dense, IdentityWeightsPassThrough) {
  Mat w(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  std::vector<double> b(3, 0.0);
  std::vector<double> x = {1.5, -2.0, 0.25};
  auto [y, cache] = dense_forward(x, w, b, Activation::identity);
  EXPECT_EQ(y, x);
}

TEST(Dense, ZeroWeightsGiveBias) {
  Mat w(2, 3);
  std::vector<double> b = {4.0, -1.0};
  auto [y, cache] = dense_forward({1, 2, 3}, w, b, Activation::identity);
  EXPECT_EQ(y, b);
}

TEST(Dense, MatchesMatvecOracle) {
  Rng rng(13);
  Mat w = testutil::random_mat(4, 6, rng);
  std::vector<double> b = testutil::random_vector(4, rng);
  std::vector<double> x = testutil::random_vector(6, rng);
  auto [y, cache] = dense_forward(x, w, b, Activation::identity);
  std::vector<double> want = matvec(w, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], want[i] + b[i], 1e-12);
}

TEST(Dense, DimensionMismatchThrows) {
  Mat w(2, 3);
  std::vector<double> b(2, 0.0);
  EXPECT_THROW(dense_forward({1.0, 2.0}, w, b, Activation::identity), ShapeError);
}

TEST(Dense, BackwardMatchesFiniteDifferencesAllActivations) {
  Rng rng(31);
  for (Activation act : {Activation::identity, Activation::relu, Activation::tanh,
                         Activation::softmax}) {
    Mat w = testutil::random_mat(4, 5, rng);
    std::vector<double> b = testutil::random_vector(4, rng);
    std::vector<double> x = testutil::random_vector(5, rng);
    const std::vector<double> head = testutil::random_vector(4, rng);
    auto loss = [&]() {
      auto [y, cache] = dense_forward(x, w, b, act);
      return dot(y.data(), head.data(), head.size());
    };
    auto [y, cache] = dense_forward(x, w, b, act);
    auto [grads, dx] = dense_backward(head, cache, w);
    EXPECT_LE(testutil::max_rel_err(grads.w.data, testutil::fd_gradient(w.data, loss)), 1e-4);
    EXPECT_LE(testutil::max_rel_err(grads.b, testutil::fd_gradient(b, loss)), 1e-4);
    EXPECT_LE(testutil::max_rel_err(dx, testutil::fd_gradient(x, loss)), 1e-4);
  }
}

TEST(Dropout, RateZeroIsIdentity) {
  Rng rng(1);
  std::vector<double> x = testutil::random_vector(10, rng);
  auto [y, mask] = dropout_forward(x, 0.0, true, rng);
  EXPECT_EQ(y, x);
  EXPECT_FALSE(mask.active);
}

TEST(Dropout, InferenceModeIsIdentity) {
  Rng rng(2);
  std::vector<double> x = testutil::random_vector(10, rng);
  const std::uint64_t state_before = rng.state;
  auto [y, mask] = dropout_forward(x, 0.5, false, rng);
  EXPECT_EQ(y, x);
  EXPECT_EQ(rng.state, state_before);  // no RNG consumption in inference
}

TEST(Dropout, RateOneThrows) {
  Rng rng(3);
  std::vector<double> x(4, 1.0);
  EXPECT_THROW(dropout_forward(x, 1.0, true, rng), ParameterError);
}

TEST(Dropout, ZeroFractionNearRate) {
  Rng rng(4);
  std::vector<double> x(100000, 1.0);
  auto [y, mask] = dropout_forward(x, 0.2, true, rng);
  std::size_t zeros = 0;
  for (double v : y) zeros += v == 0.0;
  const double frac = static_cast<double>(zeros) / static_cast<double>(x.size());
  EXPECT_NEAR(frac, 0.2, 0.01);
  // Survivors are rescaled by 1/(1-rate).
  for (double v : y) {
    if (v != 0.0) EXPECT_NEAR(v, 1.0 / 0.8, 1e-12);
  }
}

TEST(Dropout, BackwardReusesMaskAndScale) {
  Rng rng(5);
  std::vector<double> x = testutil::random_vector(64, rng);
  auto [y, mask] = dropout_forward(x, 0.3, true, rng);
  std::vector<double> upstream(64, 1.0);
  std::vector<double> dx = dropout_backward(upstream, mask);
  for (std::size_t i = 0; i < 64; ++i) {
    if (mask.keep[i]) {
      EXPECT_NEAR(dx[i], mask.scale, 1e-12);
    } else {
      EXPECT_DOUBLE_EQ(dx[i], 0.0);
      EXPECT_DOUBLE_EQ(y[i], 0.0);
    }
  }
}

TEST(Layers, ShapeContract57To55To27With64Channels) {
  Rng rng(42);
  SeqTensor x = random_seq(57, 1, rng);
  Conv1DParams p = Conv1DParams::init(3, 1, 64, rng);
  auto [conv_out, cc] = conv1d_forward(x, p);
  EXPECT_EQ(conv_out.timesteps, 55u);
  EXPECT_EQ(conv_out.channels, 64u);
  auto [pooled, pc] = maxpool1d_forward(conv_out, 2);
  EXPECT_EQ(pooled.timesteps, 27u);
  EXPECT_EQ(pooled.channels, 64u);
}
