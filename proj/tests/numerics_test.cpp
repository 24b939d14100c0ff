#include "tapnet/numerics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace tapnet;

namespace {

// Independent triple-loop product used as the matmul oracle.
Mat matmul_reference(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j)
      for (std::size_t k = 0; k < a.cols; ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

}  // namespace

TEST(Matmul, IdentityTimesMatrix) {
  Mat eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Rng rng(1);
  Mat a = testutil::random_mat(3, 4, rng);
  Mat out = matmul(eye, a);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], a.data[i]);
}

TEST(Matmul, HandChecked2x2) {
  Mat a(2, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  Mat b(2, 1);
  b(0, 0) = 5;
  b(1, 0) = 6;
  Mat c = matmul(a, b);
  EXPECT_DOUBLE_EQ(c(0, 0), 17.0);
  EXPECT_DOUBLE_EQ(c(1, 0), 39.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(7);
  Mat a = testutil::random_mat(4, 3, rng);
  Mat b = testutil::random_mat(3, 2, rng);
  Mat got = matmul(a, b);
  Mat want = matmul_reference(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got.data[i], want.data[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Mat a(2, 3), b(4, 2);
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos);
    EXPECT_NE(msg.find("4x2"), std::string::npos);
  }
}

TEST(Matmul, AssociativityOnRandomTriples) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Mat a = testutil::random_mat(4, 3, rng);
    Mat b = testutil::random_mat(3, 5, rng);
    Mat c = testutil::random_mat(5, 2, rng);
    Mat left = matmul(matmul(a, b), c);
    Mat right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double denom = std::max(1.0, std::abs(right.data[i]));
      EXPECT_LE(std::abs(left.data[i] - right.data[i]) / denom, 1e-9);
    }
  }
}

TEST(Glorot, EntriesWithinBound) {
  Rng rng(7);
  Mat m = glorot_uniform(100, 100, rng);
  const double limit = std::sqrt(6.0 / 200.0);  // 0.17320...
  for (double v : m.data) {
    EXPECT_GE(v, -limit);
    EXPECT_LE(v, limit);
  }
}

TEST(Glorot, SameSeedSameMatrix) {
  Rng a(7), b(7);
  Mat m1 = glorot_uniform(20, 30, a);
  Mat m2 = glorot_uniform(20, 30, b);
  EXPECT_EQ(m1.data, m2.data);
}

TEST(Glorot, SampleMeanWithinThreeSigma) {
  Rng rng(1);
  Mat m = glorot_uniform(64, 64, rng);
  double mean = 0.0;
  for (double v : m.data) mean += v;
  mean /= static_cast<double>(m.size());
  // Uniform on [-L, L] has variance L^2/3; the sample mean of n draws has
  // standard deviation L / sqrt(3n).
  const double limit = std::sqrt(6.0 / 128.0);
  const double sigma_mean = limit / std::sqrt(3.0 * static_cast<double>(m.size()));
  EXPECT_LE(std::abs(mean), 3.0 * sigma_mean);
}

TEST(Glorot, ZeroDimensionThrows) {
  Rng rng(1);
  EXPECT_THROW(glorot_uniform(0, 3, rng), ShapeError);
  EXPECT_THROW(glorot_uniform(3, 0, rng), ShapeError);
}

TEST(Softmax, UniformLogits) {
  std::vector<double> out = stable_softmax({0, 0, 0, 0, 0});
  for (double v : out) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Softmax, AnalyticTwoPoint) {
  std::vector<double> out = stable_softmax({0.0, std::log(2.0)});
  EXPECT_NEAR(out[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(out[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  std::vector<double> out = stable_softmax({1000.0, 1000.0});
  EXPECT_DOUBLE_EQ(out[0], 0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
}

TEST(Softmax, EmptyInputThrows) { EXPECT_THROW(stable_softmax({}), ShapeError); }

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v = testutil::random_vector(1 + rng.below(8), rng, 3.0);
    const double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    std::vector<double> a = stable_softmax(v);
    std::vector<double> b = stable_softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_GT(a[i], 0.0);
      sum += a[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Rng, DeterministicStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, BelowIsInRangeAndCoversValues) {
  Rng rng(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int count : seen) EXPECT_GT(count, 0);
}

TEST(Rng, UniformStaysInInterval) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-2.0, 3.0);
    EXPECT_GE(v, -2.0);
    EXPECT_LT(v, 3.0);
  }
}
